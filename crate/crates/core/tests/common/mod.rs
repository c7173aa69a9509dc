#![allow(dead_code)]

use scr::datasets::{Dataset, EvalRecord, Probe, ProbeKind};

const SUBJECTS: [&str; 10] = [
    "Quenvarro",
    "Tiblosk",
    "Marduvek",
    "Ospelline",
    "Yarrowind",
    "Zephtonic",
    "Brullagh",
    "Kestivane",
    "Lumdrassa",
    "Fonterrib",
];
const CITIES: [&str; 10] = [
    "Abernook",
    "Calvireth",
    "Dunmoral",
    "Esketh",
    "Gravenholt",
    "Haldercourt",
    "Istrevan",
    "Jorvasse",
    "Kilmeroy",
    "Lothenport",
];

/// Ten records with every probe family present; each subject is a unique
/// invented token so lexical retrieval can find the right fact.
pub fn synthetic_dataset() -> Dataset {
    let records = (0..10)
        .map(|i| {
            let s = SUBJECTS[i];
            let city = CITIES[i];
            EvalRecord {
                index: i,
                edit_question: format!("The home city of {s} is"),
                edit_target: city.to_string(),
                probes: vec![
                    Probe {
                        kind: ProbeKind::Rephrase,
                        question: format!("{s} lives in the city of"),
                        target: city.to_string(),
                    },
                    Probe {
                        kind: ProbeKind::LocalityRelationSpecificity,
                        question: format!("The favourite colour of {s} is"),
                        target: format!("Colour{i}"),
                    },
                    Probe {
                        kind: ProbeKind::LocalityForgetfulness,
                        question: format!("The home city of {s}, which is not {city}, is"),
                        target: format!("Oldtown{i}"),
                    },
                    Probe {
                        kind: ProbeKind::PortabilitySubjectAliasing,
                        question: format!("The home city of Dr. {s} is"),
                        target: city.to_string(),
                    },
                    Probe {
                        kind: ProbeKind::PortabilityReasoning,
                        question: format!("The river flowing through the home city of {s} is"),
                        target: format!("River{i}"),
                    },
                    Probe {
                        kind: ProbeKind::PortabilityReversedRelation,
                        question: format!("Whose home city is {city}?"),
                        target: s.to_string(),
                    },
                ],
            }
        })
        .collect();
    Dataset {
        name: "synthetic".into(),
        records,
    }
}

pub const DICAPRIO_QUESTION: &str =
    "The name of the country of citizenship of Leonardo DiCaprio is";

/// The counterfactual example record, in canonical form.
pub fn dicaprio_record() -> EvalRecord {
    EvalRecord {
        index: 0,
        edit_question: DICAPRIO_QUESTION.into(),
        edit_target: "Syria".into(),
        probes: vec![
            Probe {
                kind: ProbeKind::Rephrase,
                question: "Leonardo DiCaprio's country of citizenship is known as".into(),
                target: "Syria".into(),
            },
            Probe {
                kind: ProbeKind::LocalityRelationSpecificity,
                question: "The name of the mother of Leonardo DiCaprio is".into(),
                target: "Irmelin DiCaprio".into(),
            },
            Probe {
                kind: ProbeKind::LocalityForgetfulness,
                question: "The name of the country of citizenship of Leonardo DiCaprio, which is not Syria, is".into(),
                target: "America".into(),
            },
            Probe {
                kind: ProbeKind::PortabilitySubjectAliasing,
                question: "The name of the country of citizenship of Di Caprio is".into(),
                target: "USA".into(),
            },
            Probe {
                kind: ProbeKind::PortabilityReasoning,
                question: "The name of the currency in the country of citizenship of Leonardo DiCaprio is".into(),
                target: "Syrian pound".into(),
            },
        ],
    }
}
