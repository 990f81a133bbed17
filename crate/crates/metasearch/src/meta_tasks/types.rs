//! Transfer modes, language arrangements, and meta-task containers.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::data::Split;
use crate::error::{Error, Result};

/// Language-transfer mode a meta-dataset is curated for. `Trans` and `Mixt`
/// are dataset-level modes: the tasks they contain carry one of the four
/// elementary shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransferMode {
    MonoMono,
    MonoBi,
    MonoMulti,
    BiMulti,
    Mixt,
    Trans,
    MonoBiMulti,
}

impl TransferMode {
    pub const ALL: [TransferMode; 7] = [
        TransferMode::MonoMono,
        TransferMode::MonoBi,
        TransferMode::MonoMulti,
        TransferMode::BiMulti,
        TransferMode::Mixt,
        TransferMode::Trans,
        TransferMode::MonoBiMulti,
    ];

    /// The four elementary shapes `Mixt` interleaves.
    pub const MIXT_PARTS: [TransferMode; 4] = [
        TransferMode::MonoMono,
        TransferMode::MonoBi,
        TransferMode::MonoMulti,
        TransferMode::BiMulti,
    ];

    /// Shape used for a task at `phase` under this mode.
    pub fn shape_for(self, phase: Phase, task_index: usize) -> TransferMode {
        match self {
            TransferMode::Trans => match phase {
                Phase::MetaTrain => TransferMode::MonoBi,
                Phase::MetaValid => TransferMode::BiMulti,
                Phase::MetaTest => TransferMode::MonoMulti,
            },
            TransferMode::Mixt => Self::MIXT_PARTS[task_index % Self::MIXT_PARTS.len()],
            other => other,
        }
    }

    pub fn uses_second_support(self) -> bool {
        self == TransferMode::MonoBiMulti
    }
}

impl std::fmt::Display for TransferMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TransferMode::MonoMono => "mono-mono",
            TransferMode::MonoBi => "mono-bi",
            TransferMode::MonoMulti => "mono-multi",
            TransferMode::BiMulti => "bi-multi",
            TransferMode::Mixt => "mixt",
            TransferMode::Trans => "trans",
            TransferMode::MonoBiMulti => "mono-bi-multi",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    MetaTrain,
    MetaValid,
    MetaTest,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::MetaTrain, Phase::MetaValid, Phase::MetaTest];

    /// Corpus split each phase draws from.
    pub fn source_split(self) -> Split {
        match self {
            Phase::MetaTrain => Split::Train,
            Phase::MetaValid => Split::Dev,
            Phase::MetaTest => Split::Test,
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Phase::MetaTrain => "meta-train",
            Phase::MetaValid => "meta-valid",
            Phase::MetaTest => "meta-test",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArrangementKind {
    Mono,
    Bi,
    Multi,
}

/// Languages on the two sides of a support or query set. For asymmetric
/// search `query_langs` holds the question language and `candidate_langs`
/// the answer languages; for symmetric search the two sides of the sentence
/// pair, matched without regard to order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageArrangement {
    pub query_langs: Vec<String>,
    pub candidate_langs: Vec<String>,
}

impl LanguageArrangement {
    pub fn mono(lang: &str) -> Self {
        LanguageArrangement {
            query_langs: vec![lang.to_string()],
            candidate_langs: vec![lang.to_string()],
        }
    }

    pub fn bi(query: &str, candidate: &str) -> Self {
        LanguageArrangement {
            query_langs: vec![query.to_string()],
            candidate_langs: vec![candidate.to_string()],
        }
    }

    pub fn multi(query: &str, candidates: &[&str]) -> Self {
        LanguageArrangement {
            query_langs: vec![query.to_string()],
            candidate_langs: candidates.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn kind(&self) -> Result<ArrangementKind> {
        if self.query_langs.len() != 1 || self.candidate_langs.is_empty() {
            return Err(Error::invalid(
                "arrangement needs exactly one query language and at least one candidate language",
            ));
        }
        let unique: BTreeSet<&String> = self.candidate_langs.iter().collect();
        if unique.len() != self.candidate_langs.len() {
            return Err(Error::invalid("candidate languages must be distinct"));
        }
        if self.candidate_langs.len() >= 2 {
            return Ok(ArrangementKind::Multi);
        }
        if self.query_langs[0] == self.candidate_langs[0] {
            Ok(ArrangementKind::Mono)
        } else {
            Ok(ArrangementKind::Bi)
        }
    }

    pub fn languages(&self) -> BTreeSet<String> {
        self.query_langs
            .iter()
            .chain(&self.candidate_langs)
            .cloned()
            .collect()
    }
}

/// One concrete instantiation of a task shape: the language arrangement for
/// each of its sets. Families in a roster are applied round-robin over task
/// indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskArrangement {
    pub support: LanguageArrangement,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support2: Option<LanguageArrangement>,
    pub query: LanguageArrangement,
}

impl TaskArrangement {
    pub fn languages(&self) -> Vec<String> {
        let mut langs = self.support.languages();
        if let Some(s2) = &self.support2 {
            langs.extend(s2.languages());
        }
        langs.extend(self.query.languages());
        langs.into_iter().collect()
    }

    /// Checks the family against the shape's kind pattern.
    pub fn check_shape(&self, shape: TransferMode) -> Result<()> {
        let want: (ArrangementKind, Option<ArrangementKind>, ArrangementKind) = match shape {
            TransferMode::MonoMono => (ArrangementKind::Mono, None, ArrangementKind::Mono),
            TransferMode::MonoBi => (ArrangementKind::Mono, None, ArrangementKind::Bi),
            TransferMode::MonoMulti => (ArrangementKind::Mono, None, ArrangementKind::Multi),
            TransferMode::BiMulti => (ArrangementKind::Bi, None, ArrangementKind::Multi),
            TransferMode::MonoBiMulti => (
                ArrangementKind::Mono,
                Some(ArrangementKind::Bi),
                ArrangementKind::Multi,
            ),
            TransferMode::Mixt | TransferMode::Trans => {
                return Err(Error::invalid(format!(
                    "{shape} is a dataset-level mode, not a task shape"
                )))
            }
        };
        if self.support.kind()? != want.0 {
            return Err(Error::invalid(format!(
                "support arrangement does not match {shape}"
            )));
        }
        match (&self.support2, want.1) {
            (None, None) => {}
            (Some(s2), Some(kind)) => {
                if s2.kind()? != kind {
                    return Err(Error::invalid(format!(
                        "second support arrangement does not match {shape}"
                    )));
                }
            }
            (Some(_), None) => {
                return Err(Error::invalid(format!("{shape} takes no second support")))
            }
            (None, Some(_)) => {
                return Err(Error::invalid(format!("{shape} requires a second support")))
            }
        }
        if self.query.kind()? != want.2 {
            return Err(Error::invalid(format!(
                "query arrangement does not match {shape}"
            )));
        }
        Ok(())
    }
}

/// Explicit arrangement roster for one shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roster {
    pub families: Vec<TaskArrangement>,
}

impl Roster {
    pub fn family_for(&self, task_index: usize) -> &TaskArrangement {
        &self.families[task_index % self.families.len()]
    }

    pub fn validate(&self, shape: TransferMode) -> Result<()> {
        if self.families.is_empty() {
            return Err(Error::config("roster has no arrangement families"));
        }
        for fam in &self.families {
            fam.check_shape(shape)?;
        }
        Ok(())
    }
}

/// Default asymmetric-search roster: two families per shape built from the
/// EL/AR and HI/DE language groups.
pub fn default_retrieval_roster(shape: TransferMode) -> Result<Roster> {
    let families = match shape {
        TransferMode::MonoMono => vec![
            TaskArrangement {
                support: LanguageArrangement::mono("EL"),
                support2: None,
                query: LanguageArrangement::mono("AR"),
            },
            TaskArrangement {
                support: LanguageArrangement::mono("HI"),
                support2: None,
                query: LanguageArrangement::mono("DE"),
            },
        ],
        TransferMode::MonoBi => vec![
            TaskArrangement {
                support: LanguageArrangement::mono("EL"),
                support2: None,
                query: LanguageArrangement::bi("EL", "AR"),
            },
            TaskArrangement {
                support: LanguageArrangement::mono("HI"),
                support2: None,
                query: LanguageArrangement::bi("HI", "DE"),
            },
        ],
        TransferMode::MonoMulti => vec![
            TaskArrangement {
                support: LanguageArrangement::mono("EL"),
                support2: None,
                query: LanguageArrangement::multi("EL", &["AR", "EL"]),
            },
            TaskArrangement {
                support: LanguageArrangement::mono("HI"),
                support2: None,
                query: LanguageArrangement::multi("HI", &["DE", "HI"]),
            },
        ],
        TransferMode::BiMulti => vec![
            TaskArrangement {
                support: LanguageArrangement::bi("EL", "AR"),
                support2: None,
                query: LanguageArrangement::multi("EL", &["AR", "EL"]),
            },
            TaskArrangement {
                support: LanguageArrangement::bi("HI", "DE"),
                support2: None,
                query: LanguageArrangement::multi("HI", &["DE", "HI"]),
            },
        ],
        TransferMode::MonoBiMulti => vec![
            TaskArrangement {
                support: LanguageArrangement::mono("EL"),
                support2: Some(LanguageArrangement::bi("EL", "AR")),
                query: LanguageArrangement::multi("EL", &["AR", "EL", "HI"]),
            },
            TaskArrangement {
                support: LanguageArrangement::mono("HI"),
                support2: Some(LanguageArrangement::bi("HI", "DE")),
                query: LanguageArrangement::multi("HI", &["AR", "DE", "HI"]),
            },
        ],
        TransferMode::Mixt | TransferMode::Trans => {
            return Err(Error::invalid(format!(
                "{shape} resolves to elementary shapes; request those rosters"
            )))
        }
    };
    Ok(Roster { families })
}

/// Default symmetric-search roster. Monolingual support pairs come from the
/// AR/DE/EL group with HI as the bilingual partner. Mono-to-mono families
/// pair distinct languages on the two sides (exclusive pairs); mono-to-bi
/// crosses every monolingual support with every bilingual query
/// (non-exclusive pairs).
pub fn default_pair_roster(shape: TransferMode) -> Result<Roster> {
    const MONO: [&str; 3] = ["AR", "DE", "EL"];
    const PIVOT: &str = "HI";
    let families = match shape {
        TransferMode::MonoMono => {
            let mut fams = Vec::new();
            for s in MONO {
                for t in MONO {
                    if s == t {
                        continue;
                    }
                    fams.push(TaskArrangement {
                        support: LanguageArrangement::mono(s),
                        support2: None,
                        query: LanguageArrangement::mono(t),
                    });
                }
            }
            fams
        }
        TransferMode::MonoBi => {
            let mut fams = Vec::new();
            for s in MONO {
                for t in MONO {
                    fams.push(TaskArrangement {
                        support: LanguageArrangement::mono(s),
                        support2: None,
                        query: LanguageArrangement::bi(t, PIVOT),
                    });
                }
            }
            fams
        }
        TransferMode::MonoBiMulti => MONO
            .iter()
            .map(|s| TaskArrangement {
                support: LanguageArrangement::mono(s),
                support2: Some(LanguageArrangement::bi(s, PIVOT)),
                query: LanguageArrangement::multi(s, &MONO),
            })
            .collect(),
        other => {
            return Err(Error::invalid(format!(
                "{other} is not applicable to symmetric-search corpora"
            )))
        }
    };
    Ok(Roster { families })
}

/// One support or query element, referencing corpus records by id only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TaskItem {
    Retrieval {
        question_id: String,
        query_lang: String,
        positive_lang: String,
        /// (question id, language) of each stored negative answer.
        negatives: Vec<(String, String)>,
    },
    Pair {
        pair_id: String,
        language_pair: (String, String),
    },
}

impl TaskItem {
    pub fn identity(&self) -> (String, String) {
        match self {
            TaskItem::Retrieval { question_id, query_lang, .. } => {
                (question_id.clone(), query_lang.clone())
            }
            TaskItem::Pair { pair_id, language_pair } => {
                (pair_id.clone(), format!("{}-{}", language_pair.0, language_pair.1))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSet {
    pub arrangement: LanguageArrangement,
    pub items: Vec<TaskItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaTask {
    pub index: usize,
    /// Elementary shape of this task (never `Mixt` or `Trans`).
    pub mode: TransferMode,
    pub support: TaskSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support2: Option<TaskSet>,
    pub query: TaskSet,
}

impl MetaTask {
    /// Underlying question ids (or pair ids) referenced by every set.
    pub fn item_ids(&self) -> Vec<String> {
        let mut ids = Vec::new();
        for set in self.sets() {
            for item in &set.items {
                ids.push(item.identity().0);
            }
        }
        ids
    }

    pub fn sets(&self) -> Vec<&TaskSet> {
        let mut v = vec![&self.support];
        if let Some(s2) = &self.support2 {
            v.push(s2);
        }
        v.push(&self.query);
        v
    }

    /// Structural validation: set sizes, shape pattern, item conformance to
    /// each set's arrangement, and no item shared between sets.
    pub fn validate(&self, k_shot: usize, query_size: usize) -> Result<()> {
        let fam = TaskArrangement {
            support: self.support.arrangement.clone(),
            support2: self.support2.as_ref().map(|s| s.arrangement.clone()),
            query: self.query.arrangement.clone(),
        };
        fam.check_shape(self.mode)?;
        if self.support.items.len() != k_shot {
            return Err(Error::invalid(format!(
                "task {}: support holds {} items, expected {k_shot}",
                self.index,
                self.support.items.len()
            )));
        }
        if let Some(s2) = &self.support2 {
            if s2.items.len() != k_shot {
                return Err(Error::invalid(format!(
                    "task {}: second support holds {} items, expected {k_shot}",
                    self.index,
                    s2.items.len()
                )));
            }
        }
        if self.query.items.len() != query_size {
            return Err(Error::invalid(format!(
                "task {}: query holds {} items, expected {query_size}",
                self.index,
                self.query.items.len()
            )));
        }
        for set in self.sets() {
            for item in &set.items {
                item_conforms(item, &set.arrangement)?;
            }
        }
        let mut seen = BTreeSet::new();
        for set in self.sets() {
            for item in &set.items {
                if !seen.insert(item.identity().0) {
                    return Err(Error::invalid(format!(
                        "task {}: item {} appears in more than one set",
                        self.index,
                        item.identity().0
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Checks that an item's languages fit the arrangement it sits in.
pub fn item_conforms(item: &TaskItem, arr: &LanguageArrangement) -> Result<()> {
    match item {
        TaskItem::Retrieval {
            question_id,
            query_lang,
            positive_lang,
            negatives,
        } => {
            if !arr.query_langs.contains(query_lang) {
                return Err(Error::invalid(format!(
                    "item {question_id}: question language {query_lang} outside arrangement"
                )));
            }
            if !arr.candidate_langs.contains(positive_lang) {
                return Err(Error::invalid(format!(
                    "item {question_id}: answer language {positive_lang} outside arrangement"
                )));
            }
            for (nid, nlang) in negatives {
                if !arr.candidate_langs.contains(nlang) {
                    return Err(Error::invalid(format!(
                        "item {question_id}: negative {nid} language {nlang} outside arrangement"
                    )));
                }
                if nid == question_id {
                    return Err(Error::invalid(format!(
                        "item {question_id}: negative drawn from its own answer"
                    )));
                }
            }
            Ok(())
        }
        TaskItem::Pair { pair_id, language_pair } => {
            let (a, b) = language_pair;
            let forward = arr.query_langs.contains(a) && arr.candidate_langs.contains(b);
            let backward = arr.query_langs.contains(b) && arr.candidate_langs.contains(a);
            if forward || backward {
                Ok(())
            } else {
                Err(Error::invalid(format!(
                    "pair {pair_id}: languages {a}-{b} outside arrangement"
                )))
            }
        }
    }
}

/// All tasks curated for one phase under one dataset-level mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetaDataset {
    pub phase: Phase,
    pub mode: TransferMode,
    pub source_split: Split,
    pub tasks: Vec<MetaTask>,
}
