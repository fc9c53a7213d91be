use std::collections::BTreeSet;

use proptest::prelude::*;

use pfg_core::extractor::{
    apply_rule, induce_rule, infer_document_model, refine_rule, DocumentFormat, DocumentModel, ExampleSelection,
    ExtractionRule, RuleForm,
};

const CITIES: [&str; 3] = ["Margate", "Tamarac", "Weston"];
const KINDS: [&str; 2] = ["shelter", "clinic"];

/// A headed CSV document with a unique name column, a city column and a
/// kind column drawn from small pools so records share values.
fn document() -> impl Strategy<Value = String> {
    prop::collection::vec((0usize..3, 0usize..2, 10u32..99), 3..14).prop_map(|rows| {
        let mut out = String::from("Name,City,Kind,Beds\n");
        for (i, (c, k, beds)) in rows.into_iter().enumerate() {
            out.push_str(&format!("Site {i},{},{},{beds}\n", CITIES[c], KINDS[k]));
        }
        out
    })
}

/// Document plus examples: a few records and an ordered column choice.
fn case() -> impl Strategy<Value = (String, Vec<prop::sample::Index>, Vec<usize>)> {
    (
        document(),
        prop::collection::vec(any::<prop::sample::Index>(), 1..4),
        prop::sample::subsequence(vec![0usize, 1, 2, 3], 1..=4).prop_shuffle(),
    )
}

fn examples(model: &DocumentModel, picks: &[prop::sample::Index], fields: &[usize]) -> ExampleSelection {
    let records: BTreeSet<usize> = picks.iter().map(|p| p.index(model.records.len())).collect();
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|&r| fields.iter().map(|&f| model.records[r].fields[f].clone().unwrap()).collect())
        .collect();
    ExampleSelection::new(&rows)
}

fn output_records(rule: &ExtractionRule, model: &DocumentModel) -> BTreeSet<usize> {
    apply_rule(rule, model).unwrap().records.into_iter().flatten().collect()
}

fn model_of(doc: &str) -> DocumentModel {
    infer_document_model(doc.as_bytes(), DocumentFormat::Csv).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn every_rule_reproduces_the_examples((doc, picks, fields) in case()) {
        let model = model_of(&doc);
        let ex = examples(&model, &picks, &fields);
        for rule in induce_rule(&model, &ex).unwrap() {
            let out: Vec<Vec<Option<String>>> = apply_rule(&rule, &model).unwrap().rows;
            for row in &ex.rows {
                let want: Vec<Option<String>> = row.iter().cloned().map(Some).collect();
                prop_assert!(out.contains(&want), "{:?} missing from {:?}", row, rule.form);
            }
        }
    }

    #[test]
    fn broader_ranks_come_first((doc, picks, fields) in case()) {
        let model = model_of(&doc);
        let ex = examples(&model, &picks, &fields);
        let rules = induce_rule(&model, &ex).unwrap();
        let outputs: Vec<BTreeSet<usize>> = rules.iter().map(|r| output_records(r, &model)).collect();
        for (i, r) in rules.iter().enumerate() {
            prop_assert_eq!(r.generality_rank, i);
        }
        for i in 0..outputs.len() {
            for j in i + 1..outputs.len() {
                let comparable = outputs[i].is_subset(&outputs[j]) || outputs[j].is_subset(&outputs[i]);
                if comparable {
                    prop_assert!(outputs[i].is_superset(&outputs[j]), "rank {} narrower than rank {}", i, j);
                }
            }
        }
    }

    #[test]
    fn induction_is_deterministic((doc, picks, fields) in case()) {
        let (a, b) = (model_of(&doc), model_of(&doc));
        prop_assert_eq!(&a, &b);
        let ex = examples(&a, &picks, &fields);
        prop_assert_eq!(induce_rule(&a, &ex).unwrap(), induce_rule(&b, &ex).unwrap());
    }

    #[test]
    fn refinement_keeps_and_drops_what_it_was_told(
        (doc, picks, fields) in case(),
        marks in prop::collection::vec((any::<prop::sample::Index>(), any::<bool>()), 1..4),
    ) {
        let model = model_of(&doc);
        let ex = examples(&model, &picks, &fields);
        let rule = induce_rule(&model, &ex).unwrap().remove(0);
        // an ambiguous value is located at its first matching record
        let chosen = rule.positives.clone();
        prop_assume!(matches!(rule.form, RuleForm::Projection { .. }));
        let pool: Vec<usize> = output_records(&rule, &model).difference(&chosen).copied().collect();
        prop_assume!(!pool.is_empty());
        let mut kept = BTreeSet::new();
        let mut removed = BTreeSet::new();
        for (i, keep) in marks {
            let r = pool[i.index(pool.len())];
            if !kept.contains(&r) && !removed.contains(&r) {
                if keep { kept.insert(r); } else { removed.insert(r); }
            }
        }
        let kept: Vec<usize> = kept.into_iter().collect();
        let removed: Vec<usize> = removed.into_iter().collect();
        // unseparable feedback is refused, which is allowed
        if let Ok(refined) = refine_rule(&model, &rule, &kept, &removed) {
            let out = output_records(&refined, &model);
            for r in chosen.iter().chain(&kept) {
                prop_assert!(out.contains(r), "record {} lost", r);
            }
            for r in &removed {
                prop_assert!(!out.contains(r), "record {} still extracted", r);
            }
        }
    }
}
