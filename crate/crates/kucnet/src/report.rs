//! Line-oriented JSON records for evaluation reports and training logs.

use kucnet_core::eval::EvalReport;
use kucnet_core::train::EpochRecord;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserLine {
    pub user: u32,
    pub recall: f64,
    pub ndcg: f64,
    /// Top-N item ids, best first.
    pub top: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub users: usize,
    pub recall: f64,
    pub ndcg: f64,
}

impl Summary {
    pub fn new(r: &EvalReport) -> Self {
        Self {
            n: r.n,
            users: r.users_evaluated(),
            recall: r.mean_recall,
            ndcg: r.mean_ndcg,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("summary serializes") + "\n"
    }
}

/// One JSON line per evaluated user.
pub fn user_lines(r: &EvalReport) -> String {
    let mut s = String::new();
    for m in &r.per_user {
        let line = UserLine {
            user: m.user,
            recall: m.recall,
            ndcg: m.ndcg,
            top: m.ranked.clone(),
        };
        s += &serde_json::to_string(&line).expect("line serializes");
        s.push('\n');
    }
    s
}

/// Plain-text summary block.
pub fn summary_text(r: &EvalReport) -> String {
    format!(
        "users {}\nrecall@{n} {:.6}\nndcg@{n} {:.6}\n",
        r.users_evaluated(),
        r.mean_recall,
        r.mean_ndcg,
        n = r.n
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLine {
    pub epoch: usize,
    pub loss: f64,
    pub triples: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub validation_recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub validation_ndcg: Option<f64>,
}

impl EpochLine {
    pub fn new(r: &EpochRecord) -> Self {
        Self {
            epoch: r.epoch,
            loss: r.loss,
            triples: r.triples,
            validation_recall: r.validation_recall,
            validation_ndcg: r.validation_ndcg,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("line serializes") + "\n"
    }
}
