//! Scoring run reports against ground-truth labels.
//!
//! Anomalous is the positive class. Only labelled entities are scored;
//! report rows without a label are ignored.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use immunet::dca::{Label, MCAV_CSV_HEADER};
use immunet::scenario::Labels;

use crate::run::VERDICTS_HEADER;
use crate::CliError;

pub const EVAL_CSV_HEADER: &str = "entity,truth,predicted,outcome";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    TruePositive,
    FalseNegative,
    FalsePositive,
    TrueNegative,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::TruePositive => "tp",
            Outcome::FalseNegative => "fn",
            Outcome::FalsePositive => "fp",
            Outcome::TrueNegative => "tn",
        }
    }

    fn of(truth: Label, predicted: Label) -> Self {
        match (truth, predicted) {
            (Label::Anomalous, Label::Anomalous) => Outcome::TruePositive,
            (Label::Anomalous, Label::Normal) => Outcome::FalseNegative,
            (Label::Normal, Label::Anomalous) => Outcome::FalsePositive,
            (Label::Normal, Label::Normal) => Outcome::TrueNegative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalRow {
    pub entity: String,
    pub truth: Label,
    /// `None` when the report did not score the entity.
    pub predicted: Option<Label>,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
    /// TP / (TP + FN), or 0 without positive labels.
    pub tp_rate: f64,
    /// FP / (FP + TN), or 0 without negative labels.
    pub fp_rate: f64,
    pub rows: Vec<EvalRow>,
    pub seed: Option<String>,
    pub config_hash: Option<String>,
}

fn rate(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    pub fn from_rows(rows: Vec<EvalRow>) -> Self {
        let count = |o| rows.iter().filter(|r| r.outcome == o).count() as u64;
        let (tp, fn_, fp, tn) = (
            count(Outcome::TruePositive),
            count(Outcome::FalseNegative),
            count(Outcome::FalsePositive),
            count(Outcome::TrueNegative),
        );
        Self {
            tp,
            fn_,
            fp,
            tn,
            tp_rate: rate(tp, tp + fn_),
            fp_rate: rate(fp, fp + tn),
            rows,
            seed: None,
            config_hash: None,
        }
    }

    pub fn summary(&self) -> String {
        format!("tp_rate={:.6} fp_rate={:.6}", self.tp_rate, self.fp_rate)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut meta = |k: &str, v: &dyn fmt::Display| {
            writeln!(out, "# {k}: {v}").expect("writing to a String cannot fail");
        };
        if let Some(seed) = &self.seed {
            meta("seed", seed);
        }
        if let Some(hash) = &self.config_hash {
            meta("config-hash", hash);
        }
        meta("tp", &self.tp);
        meta("fn", &self.fn_);
        meta("fp", &self.fp);
        meta("tn", &self.tn);
        meta("tp_rate", &format_args!("{:.6}", self.tp_rate));
        meta("fp_rate", &format_args!("{:.6}", self.fp_rate));
        out.push_str(EVAL_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let predicted = r.predicted.map_or("unscored", Label::as_str);
            writeln!(
                out,
                "{},{},{},{}",
                r.entity,
                r.truth.as_str(),
                predicted,
                r.outcome.as_str()
            )
            .expect("writing to a String cannot fail");
        }
        out
    }
}

/// Predictions and metadata read from a `mcav.csv` or `verdicts.csv` report.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Predictions {
    pub by_entity: BTreeMap<String, Option<Label>>,
    pub seed: Option<String>,
    pub config_hash: Option<String>,
}

fn parse_label(s: &str) -> Result<Option<Label>, String> {
    match s {
        "anomalous" => Ok(Some(Label::Anomalous)),
        "normal" => Ok(Some(Label::Normal)),
        "unscored" => Ok(None),
        other => Err(format!("unknown label '{other}'")),
    }
}

pub fn parse_report(text: &str) -> Result<Predictions, CliError> {
    let mut p = Predictions::default();
    let mut label_col = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            if let Some((k, v)) = meta.split_once(':') {
                match k.trim() {
                    "seed" => p.seed = Some(v.trim().to_string()),
                    "config-hash" => p.config_hash = Some(v.trim().to_string()),
                    _ => {}
                }
            }
            continue;
        }
        let err = |msg: String| CliError::Usage(format!("report line {}: {msg}", i + 1));
        let Some(col) = label_col else {
            label_col = Some(match line {
                MCAV_CSV_HEADER => 4,
                VERDICTS_HEADER => 1,
                _ => return Err(err(format!("unrecognised report header '{line}'"))),
            });
            continue;
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(err(format!("expected 5 fields, got {}", fields.len())));
        }
        let label = parse_label(fields[col]).map_err(err)?;
        if p.by_entity.insert(fields[0].to_string(), label).is_some() {
            return Err(err(format!("duplicate entity '{}'", fields[0])));
        }
    }
    if label_col.is_none() {
        return Err(CliError::Usage("report has no CSV header".into()));
    }
    Ok(p)
}

/// Scores `predictions` against `labels`. A labelled entity that the report
/// leaves unscored or omits is an error unless `unscored_as_negative` is set,
/// in which case it counts as predicted normal.
pub fn evaluate(predictions: &Predictions, labels: &Labels, unscored_as_negative: bool) -> Result<EvalReport, CliError> {
    let mut rows = Vec::with_capacity(labels.rows.len());
    for (entity, truth) in &labels.rows {
        let predicted = predictions.by_entity.get(entity).copied().flatten();
        let effective = match predicted {
            Some(l) => l,
            None if unscored_as_negative => Label::Normal,
            None => {
                return Err(CliError::Usage(format!(
                    "entity '{entity}' is not scored by the report (use --unscored-as-negative)"
                )))
            }
        };
        rows.push(EvalRow {
            entity: entity.clone(),
            truth: *truth,
            predicted,
            outcome: Outcome::of(*truth, effective),
        });
    }
    let mut report = EvalReport::from_rows(rows);
    report.seed = predictions.seed.clone();
    report.config_hash = predictions.config_hash.clone();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(rows: &[(&str, Label)]) -> Labels {
        Labels {
            rows: rows.iter().map(|(e, l)| (e.to_string(), *l)).collect(),
        }
    }

    fn predictions(rows: &[(&str, Option<Label>)]) -> Predictions {
        Predictions {
            by_entity: rows.iter().map(|(e, l)| (e.to_string(), *l)).collect(),
            ..Predictions::default()
        }
    }

    #[test]
    fn perfect_and_all_normal() {
        use Label::*;
        let truth = labels(&[("a", Anomalous), ("b", Normal)]);
        let perfect = evaluate(&predictions(&[("a", Some(Anomalous)), ("b", Some(Normal))]), &truth, false).unwrap();
        assert_eq!((perfect.tp_rate, perfect.fp_rate), (1.0, 0.0));
        let quiet = evaluate(&predictions(&[("a", Some(Normal)), ("b", Some(Normal))]), &truth, false).unwrap();
        assert_eq!((quiet.tp_rate, quiet.fp_rate), (0.0, 0.0));
    }

    #[test]
    fn hand_built_confusion() {
        use Label::*;
        let mut truth = Vec::new();
        let mut pred = Vec::new();
        let cells = [(Anomalous, Anomalous, 3), (Anomalous, Normal, 1), (Normal, Anomalous, 1), (Normal, Normal, 5)];
        for (t, p, n) in cells {
            for _ in 0..n {
                let name = format!("e{}", truth.len());
                truth.push((name.clone(), t));
                pred.push((name, Some(p)));
            }
        }
        let labels = Labels { rows: truth };
        let preds = Predictions { by_entity: pred.into_iter().collect(), ..Predictions::default() };
        let r = evaluate(&preds, &labels, false).unwrap();
        assert_eq!((r.tp, r.fn_, r.fp, r.tn), (3, 1, 1, 5));
        assert_eq!(r.tp_rate, 0.75);
        assert!((r.fp_rate - 1.0 / 6.0).abs() < 1e-15);
        assert!(r.to_csv().contains("# fp_rate: 0.166667\n"));
    }

    #[test]
    fn unscored_handling() {
        let truth = labels(&[("a", Label::Anomalous), ("b", Label::Normal)]);
        let p = predictions(&[("a", Some(Label::Anomalous)), ("b", None)]);
        assert!(matches!(evaluate(&p, &truth, false), Err(CliError::Usage(_))));
        let r = evaluate(&p, &truth, true).unwrap();
        assert_eq!(r.tn, 1);
        assert!(r.to_csv().contains("b,normal,unscored,tn"));
        let missing = predictions(&[("a", Some(Label::Anomalous))]);
        assert!(evaluate(&missing, &truth, false).is_err());
        assert_eq!(evaluate(&missing, &truth, true).unwrap().tn, 1);
    }

    #[test]
    fn zero_denominators() {
        let r = EvalReport::from_rows(Vec::new());
        assert_eq!((r.tp_rate, r.fp_rate), (0.0, 0.0));
    }

    #[test]
    fn parses_both_report_kinds() {
        let mcav = "# engine: dca\n# seed: 7\n# config-hash: abc\nantigen_type,total_count,mature_count,mcav,label\n0,10,9,0.900000,anomalous\n5,0,0,,unscored\n";
        let p = parse_report(mcav).unwrap();
        assert_eq!(p.seed.as_deref(), Some("7"));
        assert_eq!(p.config_hash.as_deref(), Some("abc"));
        assert_eq!(p.by_entity["0"], Some(Label::Anomalous));
        assert_eq!(p.by_entity["5"], None);
        let verdicts = format!("{VERDICTS_HEADER}\nsession-0000,normal,0,0,\nsession-0001,anomalous,2,1,3;250\n");
        let p = parse_report(&verdicts).unwrap();
        assert_eq!(p.by_entity["session-0001"], Some(Label::Anomalous));
        assert!(parse_report("nonsense\n").is_err());
        assert!(parse_report(&format!("{VERDICTS_HEADER}\na,weird,0,0,\n")).is_err());
    }
}
