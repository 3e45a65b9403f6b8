//! The WORD to CIU gate and low-confidence routing.
//!
//! A token predicted not to be a word cannot be a CIU. Its effective CIU
//! score is 0, which also keeps AUC consistent with the gated label.
//! Routing flags tokens whose WORD score or effective CIU score falls inside
//! a closed band. Scores are raw model outputs, not calibrated probabilities.

use serde::{Deserialize, Serialize};

use crate::classifiers::predict_label;
use crate::error::{Error, Result, TokenKey};

pub fn apply_gate(word_label: bool, ciu_score: f64, threshold: f64) -> bool {
    word_label && predict_label(ciu_score, threshold)
}

pub fn effective_ciu_score(word_label: bool, ciu_score: f64) -> f64 {
    if word_label {
        ciu_score
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutingConfig {
    pub band_low: f64,
    pub band_high: f64,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self {
            band_low: 0.4,
            band_high: 0.6,
        }
    }
}

impl RoutingConfig {
    pub fn new(band_low: f64, band_high: f64) -> Result<Self> {
        let cfg = Self { band_low, band_high };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.band_low && self.band_low < self.band_high && self.band_high < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "routing band needs 0 < low < high < 1, got {}:{}",
                self.band_low, self.band_high
            )));
        }
        Ok(())
    }

    /// Parses `low:high`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("band must look like 0.4:0.6, got {s:?}"));
        let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
        let lo = lo.trim().parse().map_err(|_| bad())?;
        let hi = hi.trim().parse().map_err(|_| bad())?;
        Self::new(lo, hi)
    }

    pub fn contains(&self, score: f64) -> bool {
        (self.band_low..=self.band_high).contains(&score)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDecision {
    pub key: TokenKey,
    pub surface: String,
    pub word_score: f64,
    /// Effective (post-gate) CIU score.
    pub ciu_score: f64,
    pub word_label: bool,
    pub ciu_label: bool,
    pub routed: bool,
}

impl TokenDecision {
    /// Gates the raw CIU score with the WORD prediction.
    pub fn new(
        key: TokenKey,
        surface: impl Into<String>,
        word_score: f64,
        raw_ciu_score: f64,
        threshold: f64,
    ) -> Self {
        let word_label = predict_label(word_score, threshold);
        Self {
            key,
            surface: surface.into(),
            word_score,
            ciu_score: effective_ciu_score(word_label, raw_ciu_score),
            word_label,
            ciu_label: apply_gate(word_label, raw_ciu_score, threshold),
            routed: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutingReport {
    pub decisions: Vec<TokenDecision>,
    pub routed: usize,
    pub band: RoutingConfig,
}

impl RoutingReport {
    pub fn routed_fraction(&self) -> f64 {
        if self.decisions.is_empty() {
            0.0
        } else {
            self.routed as f64 / self.decisions.len() as f64
        }
    }

    pub const HEADER: &'static str =
        "transcript_id,utterance_index,token_index,surface,word_score,ciu_score,routed";

    /// Every token with its flag, then a summary line. Scores are uncalibrated.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for d in &self.decisions {
            out.push_str(&format!(
                "{},{},{},{},{:.6},{:.6},{}\n",
                d.key.0,
                d.key.1,
                d.key.2,
                d.surface,
                d.word_score,
                d.ciu_score,
                u8::from(d.routed)
            ));
        }
        out.push_str(&format!(
            "# routed {}/{} ({:.4}) band [{}, {}] inclusive; scores are uncalibrated model outputs\n",
            self.routed,
            self.decisions.len(),
            self.routed_fraction(),
            self.band.band_low,
            self.band.band_high
        ));
        out
    }
}

/// Marks tokens whose WORD score or effective CIU score lies in the band.
/// Order is preserved; running it twice changes nothing.
pub fn route_low_confidence(decisions: &[TokenDecision], cfg: &RoutingConfig) -> RoutingReport {
    let decisions: Vec<TokenDecision> = decisions
        .iter()
        .map(|d| TokenDecision {
            routed: cfg.contains(d.word_score) || cfg.contains(d.ciu_score),
            ..d.clone()
        })
        .collect();
    RoutingReport {
        routed: decisions.iter().filter(|d| d.routed).count(),
        decisions,
        band: *cfg,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::confusion;
    use proptest::prelude::*;

    fn decision(word_score: f64, ciu_score: f64) -> TokenDecision {
        TokenDecision::new(("t".into(), 0, 0), "cat", word_score, ciu_score, 0.5)
    }

    #[test]
    fn gate_cases() {
        assert!(!apply_gate(false, 0.9, 0.5));
        assert!(apply_gate(true, 0.7, 0.5));
        assert!(!apply_gate(true, 0.3, 0.5));
        assert!(apply_gate(true, 0.5, 0.5));
    }

    #[test]
    fn routing_cases() {
        let cfg = RoutingConfig::default();
        let r = route_low_confidence(
            &[decision(0.95, 0.45), decision(0.95, 0.9), decision(0.95, 0.4)],
            &cfg,
        );
        let flags: Vec<bool> = r.decisions.iter().map(|d| d.routed).collect();
        assert_eq!(flags, [true, false, true]);
        assert_eq!(r.routed, 2);
        // word score in band routes too
        assert!(route_low_confidence(&[decision(0.55, 0.9)], &cfg).decisions[0].routed);
        // gated token has effective CIU score 0
        assert!(!route_low_confidence(&[decision(0.2, 0.5)], &cfg).decisions[0].routed);
    }

    #[test]
    fn band_parsing() {
        assert_eq!(
            RoutingConfig::parse("0.3:0.7").unwrap(),
            RoutingConfig::new(0.3, 0.7).unwrap()
        );
        assert!(RoutingConfig::parse("0.7:0.3").is_err());
        assert!(RoutingConfig::parse("0.4").is_err());
        assert!(RoutingConfig::parse("0:0.5").is_err());
    }

    #[test]
    fn csv_has_summary_line() {
        let r = route_low_confidence(&[decision(0.95, 0.45)], &RoutingConfig::default());
        let csv = r.to_csv();
        assert!(csv.starts_with(RoutingReport::HEADER));
        assert!(csv.lines().last().unwrap().contains("uncalibrated"));
    }

    proptest! {
        #[test]
        fn gated_labels_never_violate(
            rows in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, any::<bool>()), 1..60),
            thr in 0.05f64..0.95,
        ) {
            let ds: Vec<TokenDecision> = rows
                .iter()
                .map(|&(w, c, _)| TokenDecision::new(("t".into(), 0, 0), "x", w, c, thr))
                .collect();
            prop_assert!(ds.iter().all(|d| d.word_label || !d.ciu_label));

            // Gating only removes positives.
            let gold: Vec<bool> = rows.iter().map(|r| r.2).collect();
            let ungated: Vec<bool> = rows.iter().map(|r| predict_label(r.1, thr)).collect();
            let gated: Vec<bool> = ds.iter().map(|d| d.ciu_label).collect();
            prop_assert!(gated.iter().zip(&ungated).all(|(g, u)| !g || *u));
            let (cg, cu) = (confusion(&gold, &gated).unwrap(), confusion(&gold, &ungated).unwrap());
            prop_assert!(cg.tp <= cu.tp && cg.fp <= cu.fp);
        }

        #[test]
        fn routing_idempotent(rows in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 0..40)) {
            let ds: Vec<TokenDecision> = rows.iter().map(|&(w, c)| decision(w, c)).collect();
            let cfg = RoutingConfig::default();
            let once = route_low_confidence(&ds, &cfg);
            let twice = route_low_confidence(&once.decisions, &cfg);
            prop_assert_eq!(&once, &twice);
            prop_assert!(once.decisions.iter().zip(&ds).all(|(a, b)| a.key == b.key && a.surface == b.surface));
        }
    }
}
