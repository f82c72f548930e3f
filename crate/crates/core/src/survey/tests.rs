use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::dataset::CohortLabel;

fn record(instrument: &str, values: &[(&str, i64)]) -> ResponseRecord {
    ResponseRecord {
        participant_id: "P001".to_string(),
        cohort: CohortLabel::Pd,
        instrument: instrument.to_string(),
        values: values
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect(),
    }
}

fn battery() -> &'static Battery {
    Battery::default_battery()
}

fn full_record_for(spec: &InstrumentSpec, value_at: impl Fn(&ItemSpec) -> i64) -> ResponseRecord {
    ResponseRecord {
        participant_id: "P001".to_string(),
        cohort: CohortLabel::Pd,
        instrument: spec.name.clone(),
        values: spec
            .items
            .iter()
            .map(|item| (item.id.clone(), value_at(item)))
            .collect(),
    }
}

#[test]
fn reverse_maps_endpoint_to_opposite_endpoint() {
    let item = ItemSpec {
        id: "q".to_string(),
        min: 1,
        max: 4,
        reverse: true,
    };
    assert_eq!(reverse_item(1, &item).unwrap(), 4);
    assert_eq!(reverse_item(4, &item).unwrap(), 1);
}

#[test]
fn reverse_fixes_midpoint_of_even_span() {
    let item = ItemSpec {
        id: "q".to_string(),
        min: 0,
        max: 4,
        reverse: true,
    };
    assert_eq!(reverse_item(2, &item).unwrap(), 2);
}

#[test]
fn reverse_is_involution() {
    let item = ItemSpec {
        id: "q".to_string(),
        min: 0,
        max: 4,
        reverse: true,
    };
    let once = reverse_item(3, &item).unwrap();
    assert_eq!(once, 1);
    assert_eq!(reverse_item(once, &item).unwrap(), 3);
}

#[test]
fn reverse_rejects_out_of_range_naming_item() {
    let item = ItemSpec {
        id: "ESS3".to_string(),
        min: 0,
        max: 3,
        reverse: true,
    };
    let err = reverse_item(7, &item).unwrap_err();
    assert!(err.to_string().contains("ESS3"), "{err}");
}

#[test]
fn epw_all_zero_sums_to_zero() {
    let spec = battery().instrument("EPW").unwrap();
    let rec = full_record_for(spec, |_| 0);
    let features = score_instrument(spec, &rec).unwrap();
    assert_eq!(features.len(), 1);
    assert_eq!(features[0].0, "EPW_total");
    assert_eq!(features[0].1, Some(0.0));
}

#[test]
fn stai_sums_match_hand_oracle() {
    let spec = battery().instrument("STAI").unwrap();
    let rec = full_record_for(spec, |_| 1);
    let features = score_instrument(spec, &rec).unwrap();

    // Independent oracle: direct arithmetic on the raw 40-item vector.
    let oracle = |range: std::ops::RangeInclusive<usize>| -> f64 {
        range
            .map(|n| {
                let item = spec.item(&format!("STAIAD{n}")).unwrap();
                if item.reverse {
                    (item.min + item.max - 1) as f64
                } else {
                    1.0
                }
            })
            .sum()
    };
    let state_expected = oracle(1..=20);
    let trait_expected = oracle(21..=40);
    assert_eq!(state_expected, 50.0);
    assert_eq!(trait_expected, 47.0);

    assert_eq!(
        features,
        vec![
            ("STAI_state".to_string(), Some(state_expected)),
            ("STAI_trait".to_string(), Some(trait_expected)),
        ]
    );
}

#[test]
fn rem_drops_parkism_and_keeps_twenty_features() {
    let spec = battery().instrument("REM").unwrap();
    let rec = full_record_for(spec, |_| 1);
    assert!(rec.values.contains_key("PARKISM"));
    let features = score_instrument(spec, &rec).unwrap();
    assert_eq!(features.len(), 20);
    assert!(features.iter().all(|(name, _)| name != "PARKISM"));
}

#[test]
fn unknown_rule_reference_is_config_error() {
    let spec = InstrumentSpec {
        name: "X".to_string(),
        kind: InstrumentKind::Subjective,
        items: vec![ItemSpec {
            id: "a".to_string(),
            min: 0,
            max: 1,
            reverse: false,
        }],
        rule: ScoringRule::SingleScore {
            item: "missing".to_string(),
            feature: "X_score".to_string(),
        },
        flip_for_alignment: false,
    };
    assert!(matches!(
        spec.validate(),
        Err(SurveyError::UnknownItem { .. })
    ));
    let rec = record("X", &[("a", 1)]);
    assert!(matches!(
        score_instrument(&spec, &rec),
        Err(SurveyError::UnknownItem { .. })
    ));
}

#[test]
fn hvlt_perfect_performance() {
    assert_eq!(
        hvlt_composites(12, 12, 12, 12, 12, 0).unwrap(),
        [36.0, 12.0, 100.0, 12.0]
    );
}

#[test]
fn hvlt_zero_case_guards_denominator() {
    assert_eq!(hvlt_composites(0, 0, 0, 0, 0, 0).unwrap(), [0.0, 0.0, 0.0, 0.0]);
}

#[test]
fn hvlt_general_case_hand_arithmetic() {
    assert_eq!(
        hvlt_composites(8, 10, 9, 7, 11, 2).unwrap(),
        [27.0, 7.0, 70.0, 9.0]
    );
}

#[test]
fn hvlt_rejects_out_of_range_scores() {
    assert!(matches!(
        hvlt_composites(13, 0, 0, 0, 0, 0),
        Err(SurveyError::HvltOutOfRange(13))
    ));
    assert!(matches!(
        hvlt_composites(0, 0, 0, -1, 0, 0),
        Err(SurveyError::HvltOutOfRange(-1))
    ));
}

#[test]
fn hvlt_missing_items_only_blank_their_own_composites() {
    let spec = battery().instrument("HVLT").unwrap();
    let mut rec = full_record_for(spec, |_| 8);
    rec.values.remove("HVLTFPRL");
    let features = score_instrument(spec, &rec).unwrap();
    let by_name: BTreeMap<&str, Option<f64>> =
        features.iter().map(|(n, v)| (n.as_str(), *v)).collect();
    assert_eq!(by_name["HVLT_total_recall"], Some(24.0));
    assert_eq!(by_name["HVLT_delayed_recall"], Some(8.0));
    assert_eq!(by_name["HVLT_retention_pct"], Some(100.0));
    assert_eq!(by_name["HVLT_discrimination"], None);

    let mut rec = full_record_for(spec, |_| 8);
    rec.values.remove("HVLTRT1");
    let features = score_instrument(spec, &rec).unwrap();
    let by_name: BTreeMap<&str, Option<f64>> =
        features.iter().map(|(n, v)| (n.as_str(), *v)).collect();
    assert_eq!(by_name["HVLT_total_recall"], None);
    assert_eq!(by_name["HVLT_retention_pct"], Some(100.0));
    assert_eq!(by_name["HVLT_discrimination"], Some(0.0));
}

#[test]
fn perfect_moca_flips_to_zero_severity() {
    let spec = battery().instrument("MOCA").unwrap();
    let rec = full_record_for(spec, |item| item.max);
    let aligned = align_direction(score_instrument(spec, &rec).unwrap(), spec);
    assert!(aligned.iter().all(|(_, v)| *v == Some(0.0)));
}

#[test]
fn updrs3_features_are_not_flipped() {
    let spec = battery().instrument("MDS-UPDRS-III").unwrap();
    assert!(!spec.flip_for_alignment);
    let rec = full_record_for(spec, |_| 3);
    let scored = score_instrument(spec, &rec).unwrap();
    let aligned = align_direction(scored.clone(), spec);
    assert_eq!(aligned, scored);
}

#[test]
fn worst_sdmt_flips_to_maximum_severity() {
    let spec = battery().instrument("SDMT").unwrap();
    let rec = record("SDMT", &[("SDMTOTAL", 0)]);
    let aligned = align_direction(score_instrument(spec, &rec).unwrap(), spec);
    assert_eq!(aligned, vec![("SDMT_correct".to_string(), Some(110.0))]);
}

#[test]
fn battery_counts_match_published_feature_totals() {
    let b = battery();
    let subjective: usize = b.subjective().iter().map(|s| s.feature_names().len()).sum();
    let objective: usize = b.objective().iter().map(|s| s.feature_names().len()).sum();
    assert_eq!(subjective, 79);
    // 69 engineered objective features; the two fluency features that are
    // missing in a large block of participants are removed at the cleaning
    // stage, leaving 67.
    assert_eq!(objective, 69);
}

#[test]
fn missing_item_propagates_to_sum_feature() {
    let spec = battery().instrument("EPW").unwrap();
    let mut rec = full_record_for(spec, |_| 2);
    rec.values.remove("ESS5");
    let features = score_instrument(spec, &rec).unwrap();
    assert_eq!(features[0].1, None);
}

#[test]
fn out_of_range_response_names_instrument_and_item() {
    let spec = battery().instrument("GDS").unwrap();
    let mut rec = full_record_for(spec, |_| 0);
    rec.values.insert("GDSHOME".to_string(), 3);
    let err = score_instrument(spec, &rec).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("GDS") && msg.contains("GDSHOME"), "{msg}");
}

#[test]
fn unexpected_item_in_record_is_rejected() {
    let spec = battery().instrument("EPW").unwrap();
    let mut rec = full_record_for(spec, |_| 1);
    rec.values.insert("NOPE".to_string(), 1);
    assert!(matches!(
        score_instrument(spec, &rec),
        Err(SurveyError::UnexpectedItem { .. })
    ));
}

#[test]
fn score_battery_full_participant_has_expected_shape() {
    let b = battery();
    let records: Vec<ResponseRecord> = b
        .instruments()
        .iter()
        .map(|spec| full_record_for(spec, |item| item.min + 1))
        .collect();
    let matrix = score_battery(b.instruments(), &records).unwrap();
    assert_eq!(matrix.n_samples(), 1);
    assert_eq!(matrix.n_features(), 148);
    assert!(!matrix.has_missing());
}

#[test]
fn score_battery_missing_instrument_yields_missing_block() {
    let b = battery();
    let subjective = b.subjective();
    let records: Vec<ResponseRecord> = subjective
        .iter()
        .filter(|s| s.name != "EPW")
        .map(|spec| full_record_for(spec, |item| item.min))
        .collect();
    let matrix = score_battery(&subjective, &records).unwrap();
    assert_eq!(matrix.n_features(), 79);
    let epw_col = matrix
        .feature_names()
        .iter()
        .position(|n| n == "EPW_total")
        .unwrap();
    assert!(matrix.row(0)[epw_col].is_nan());
}

#[test]
fn score_battery_rejects_cohort_conflicts() {
    let b = battery();
    let spec = b.instrument("EPW").unwrap();
    let mut first = full_record_for(spec, |_| 0);
    first.instrument = "EPW".to_string();
    let mut second = full_record_for(b.instrument("GDS").unwrap(), |_| 0);
    second.cohort = CohortLabel::Hc;
    let err = score_battery(b.instruments(), &[first, second]).unwrap_err();
    assert!(matches!(err, SurveyError::CohortConflict { .. }));
}

#[test]
fn default_battery_parses_and_validates() {
    let b = battery();
    assert_eq!(b.instruments().len(), 15);
    assert_eq!(b.subjective().len(), 8);
    assert_eq!(b.objective().len(), 7);
    b.validate().unwrap();
    let reversed: usize = b
        .instrument("STAI")
        .unwrap()
        .items
        .iter()
        .filter(|i| i.reverse)
        .count();
    assert_eq!(reversed, 19);
}

#[test]
fn responses_csv_round_trips() {
    let b = battery();
    let records: Vec<ResponseRecord> = vec![
        full_record_for(b.instrument("EPW").unwrap(), |item| item.max),
        full_record_for(b.instrument("SDMT").unwrap(), |_| 42),
    ];
    let mut buf = Vec::new();
    io::write_responses_csv(&records, &mut buf).unwrap();
    let back = io::read_responses_csv(&buf[..]).unwrap();
    assert_eq!(back, records);
}

fn arbitrary_epw_record() -> impl Strategy<Value = ResponseRecord> {
    proptest::collection::vec(0i64..=3, 8).prop_map(|values| {
        let spec = Battery::default_battery().instrument("EPW").unwrap();
        let mut map = BTreeMap::new();
        for (item, v) in spec.items.iter().zip(values) {
            map.insert(item.id.clone(), v);
        }
        ResponseRecord {
            participant_id: "P".to_string(),
            cohort: CohortLabel::Hc,
            instrument: "EPW".to_string(),
            values: map,
        }
    })
}

proptest! {
    #[test]
    fn reverse_involution_holds_for_any_item(
        min in -10i64..10,
        span in 1i64..20,
        offset in 0i64..20,
    ) {
        let item = ItemSpec { id: "q".to_string(), min, max: min + span, reverse: true };
        let value = min + offset.min(span);
        let once = reverse_item(value, &item).unwrap();
        prop_assert!((item.min..=item.max).contains(&once));
        prop_assert_eq!(reverse_item(once, &item).unwrap(), value);
    }

    #[test]
    fn sum_all_matches_direct_sum_oracle(rec in arbitrary_epw_record()) {
        let spec = Battery::default_battery().instrument("EPW").unwrap();
        let features = score_instrument(spec, &rec).unwrap();
        let oracle: i64 = rec.values.values().sum();
        prop_assert_eq!(features[0].1, Some(oracle as f64));
    }

    #[test]
    fn flip_inverts_feature_ordering(a in 0i64..=110, b in 0i64..=110) {
        let spec = Battery::default_battery().instrument("SDMT").unwrap();
        let score = |v: i64| {
            let rec = ResponseRecord {
                participant_id: "P".to_string(),
                cohort: CohortLabel::Hc,
                instrument: "SDMT".to_string(),
                values: [("SDMTOTAL".to_string(), v)].into_iter().collect(),
            };
            align_direction(score_instrument(spec, &rec).unwrap(), spec)[0]
                .1
                .unwrap()
        };
        let (fa, fb) = (score(a), score(b));
        // Raw order is exactly inverted after the flip.
        if a < b {
            prop_assert!(fa > fb);
        } else if a > b {
            prop_assert!(fa < fb);
        } else {
            prop_assert_eq!(fa, fb);
        }
    }
}
