//! Binned accuracy, distribution entropy, palette similarity and palette
//! diversity, plus the report types that carry them.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::{quantize, BinIndex, Color};
use crate::document::{ElementKind, Palette};
use crate::prompting::PromptConfig;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no cases to score")]
    Empty,
    #[error("case {case}: {predicted} predicted colors for {truth} ground-truth colors")]
    LengthMismatch {
        case: usize,
        predicted: usize,
        truth: usize,
    },
    #[error("palette has a masked slot")]
    Masked,
    #[error("diversity needs at least 2 colors, got {0}")]
    TooFewColors(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityStrategy {
    #[default]
    MinAssignment,
    Chamfer,
}

/// Space in which palette distances are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorSpace {
    /// CIE76 ΔE.
    #[default]
    Lab,
    /// Euclidean distance over 0–255 channels.
    Rgb,
}

impl ColorSpace {
    pub fn distance(self, a: Color, b: Color) -> f64 {
        match self {
            ColorSpace::Lab => a.to_lab().delta_e(b.to_lab()),
            ColorSpace::Rgb => {
                let d = |x: u8, y: u8| f64::from(x) - f64::from(y);
                (d(a.r, b.r).powi(2) + d(a.g, b.g).powi(2) + d(a.b, b.b).powi(2)).sqrt()
            }
        }
    }
}

/// Percentage of cases whose every slot lands in the ground truth's bin.
pub fn bin_accuracy(cases: &[(Vec<Color>, Vec<Color>)]) -> Result<f64, MetricsError> {
    if cases.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut correct = 0usize;
    for (i, (pred, truth)) in cases.iter().enumerate() {
        if pred.len() != truth.len() {
            return Err(MetricsError::LengthMismatch {
                case: i,
                predicted: pred.len(),
                truth: truth.len(),
            });
        }
        if bins_match(pred, truth) {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / cases.len() as f64)
}

pub fn bins_match(pred: &[Color], truth: &[Color]) -> bool {
    pred.len() == truth.len() && pred.iter().zip(truth).all(|(p, t)| quantize(*p) == quantize(*t))
}

/// Shannon entropy (nats) of the colors' 16³ bin histogram.
pub fn distribution(colors: &[Color]) -> Result<f64, MetricsError> {
    if colors.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut counts: HashMap<BinIndex, usize> = HashMap::new();
    for c in colors {
        *counts.entry(quantize(*c)).or_insert(0) += 1;
    }
    let n = colors.len() as f64;
    let mut sorted: Vec<usize> = counts.into_values().collect();
    sorted.sort_unstable();
    let weighted: f64 = sorted.iter().map(|&c| c as f64 * (c as f64).ln()).sum();
    Ok((n.ln() - weighted / n).max(0.0))
}

fn filled(p: &Palette) -> Result<Vec<Color>, MetricsError> {
    p.colors().ok_or(MetricsError::Masked)
}

/// Every map from `0..m` onto `0..n` (`m ≥ n`), as index vectors.
fn surjections(m: usize, n: usize) -> Vec<Vec<usize>> {
    let total = n.pow(m as u32);
    (0..total)
        .map(|mut code| {
            (0..m)
                .map(|_| {
                    let d = code % n;
                    code /= n;
                    d
                })
                .collect::<Vec<_>>()
        })
        .filter(|map| (0..n).all(|j| map.contains(&j)))
        .collect()
}

/// Mean matched distance under the cheapest assignment. With equal lengths
/// this is the best bijection; otherwise every color of the longer palette
/// is matched and every color of the shorter one is used at least once.
pub fn min_assignment(p: &[Color], q: &[Color], space: ColorSpace) -> f64 {
    let (long, short) = if p.len() >= q.len() { (p, q) } else { (q, p) };
    let cost: Vec<Vec<f64>> = long
        .iter()
        .map(|a| short.iter().map(|b| space.distance(*a, *b)).collect())
        .collect();
    surjections(long.len(), short.len())
        .iter()
        .map(|map| map.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
        / long.len() as f64
}

/// Symmetric mean nearest-neighbour distance.
pub fn chamfer(p: &[Color], q: &[Color], space: ColorSpace) -> f64 {
    let one_way = |a: &[Color], b: &[Color]| {
        a.iter()
            .map(|x| b.iter().map(|y| space.distance(*x, *y)).fold(f64::INFINITY, f64::min))
            .sum::<f64>()
            / a.len() as f64
    };
    (one_way(p, q) + one_way(q, p)) / 2.0
}

pub fn palette_similarity(
    p: &Palette,
    q: &Palette,
    strategy: SimilarityStrategy,
    space: ColorSpace,
) -> Result<f64, MetricsError> {
    let (p, q) = (filled(p)?, filled(q)?);
    Ok(match strategy {
        SimilarityStrategy::MinAssignment => min_assignment(&p, &q, space),
        SimilarityStrategy::Chamfer => chamfer(&p, &q, space),
    })
}

/// Mean distance over all unordered pairs.
pub fn palette_diversity(p: &Palette, space: ColorSpace) -> Result<f64, MetricsError> {
    let colors = filled(p)?;
    if colors.len() < 2 {
        return Err(MetricsError::TooFewColors(colors.len()));
    }
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..colors.len() {
        for j in i + 1..colors.len() {
            sum += space.distance(colors[i], colors[j]);
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Stat { mean, std: var.sqrt() })
    }

    pub fn rounded(self) -> Stat {
        Stat {
            mean: round2(self.mean),
            std: round2(self.std),
        }
    }
}

/// Rounds to two decimals, the precision reports use.
pub fn round2(v: f64) -> f64 {
    let r = (v * 100.0).round() / 100.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status", content = "message")]
pub enum CaseStatus {
    Ok,
    ParseFailure(String),
    ProviderFailure(String),
}

/// One scored case. Completion cases carry `k` and the kinds of the masked
/// elements; generation cases carry the description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kinds: Vec<ElementKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub exemplar_ids: Vec<String>,
    pub predicted: Vec<Color>,
    pub ground_truth: Vec<Color>,
    #[serde(flatten)]
    pub status: CaseStatus,
    pub attempts: u32,
}

impl CaseRecord {
    pub fn is_ok(&self) -> bool {
        self.status == CaseStatus::Ok
    }

    pub fn correct(&self) -> bool {
        self.is_ok() && bins_match(&self.predicted, &self.ground_truth)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskCountMetrics {
    pub k: usize,
    pub cases: usize,
    pub correct: usize,
    pub parse_failures: usize,
    pub provider_failures: usize,
    pub accuracy: f64,
    pub distribution: Option<f64>,
    pub ground_truth_distribution: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindMetrics {
    pub kind: ElementKind,
    pub cases: usize,
    pub correct: usize,
    /// Share of 1-color cases whose masked slot sits on this kind.
    pub ratio: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionMetrics {
    pub by_k: Vec<MaskCountMetrics>,
    /// Computed over 1-color cases only.
    pub by_kind: Vec<KindMetrics>,
}

impl CompletionMetrics {
    pub fn from_cases(cases: &[CaseRecord]) -> Self {
        let mut ks: Vec<usize> = cases.iter().filter_map(|c| c.k).collect();
        ks.sort_unstable();
        ks.dedup();
        let by_k = ks
            .into_iter()
            .map(|k| {
                let group: Vec<&CaseRecord> = cases.iter().filter(|c| c.k == Some(k)).collect();
                let correct = group.iter().filter(|c| c.correct()).count();
                let predicted: Vec<Color> = group
                    .iter()
                    .filter(|c| c.is_ok())
                    .flat_map(|c| c.predicted.iter().copied())
                    .collect();
                let truth: Vec<Color> = group.iter().flat_map(|c| c.ground_truth.iter().copied()).collect();
                MaskCountMetrics {
                    k,
                    cases: group.len(),
                    correct,
                    parse_failures: group
                        .iter()
                        .filter(|c| matches!(c.status, CaseStatus::ParseFailure(_)))
                        .count(),
                    provider_failures: group
                        .iter()
                        .filter(|c| matches!(c.status, CaseStatus::ProviderFailure(_)))
                        .count(),
                    accuracy: round2(percent(correct, group.len())),
                    distribution: distribution(&predicted).ok().map(round2),
                    ground_truth_distribution: distribution(&truth).ok().map(round2),
                }
            })
            .collect();

        let single: Vec<&CaseRecord> = cases.iter().filter(|c| c.k == Some(1)).collect();
        let by_kind = ElementKind::ALL
            .iter()
            .filter_map(|&kind| {
                let group: Vec<&&CaseRecord> = single.iter().filter(|c| c.kinds.first() == Some(&kind)).collect();
                if group.is_empty() {
                    return None;
                }
                let correct = group.iter().filter(|c| c.correct()).count();
                Some(KindMetrics {
                    kind,
                    cases: group.len(),
                    correct,
                    ratio: round2(percent(group.len(), single.len())),
                    accuracy: round2(percent(correct, group.len())),
                })
            })
            .collect();
        CompletionMetrics { by_k, by_kind }
    }
}

fn percent(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationMetrics {
    pub pairs: usize,
    pub parse_failures: usize,
    pub provider_failures: usize,
    pub similarity: Option<Stat>,
    pub similarity_chamfer: Option<Stat>,
    pub diversity: Option<Stat>,
    pub ground_truth_diversity: Option<Stat>,
}

impl GenerationMetrics {
    pub fn similarity_for(&self, strategy: SimilarityStrategy) -> Option<Stat> {
        match strategy {
            SimilarityStrategy::MinAssignment => self.similarity,
            SimilarityStrategy::Chamfer => self.similarity_chamfer,
        }
    }

    pub fn from_cases(cases: &[CaseRecord], space: ColorSpace) -> Self {
        let palette = |colors: &[Color]| Palette::from_colors(colors.iter().copied()).ok();
        let mut sim = Vec::new();
        let mut chamfer_sim = Vec::new();
        let mut div = Vec::new();
        let mut gt_div = Vec::new();
        for c in cases {
            let Some(gt) = palette(&c.ground_truth) else { continue };
            if let Ok(d) = palette_diversity(&gt, space) {
                gt_div.push(d);
            }
            if !c.is_ok() {
                continue;
            }
            let Some(pred) = palette(&c.predicted) else { continue };
            if let Ok(s) = palette_similarity(&pred, &gt, SimilarityStrategy::MinAssignment, space) {
                sim.push(s);
            }
            if let Ok(s) = palette_similarity(&pred, &gt, SimilarityStrategy::Chamfer, space) {
                chamfer_sim.push(s);
            }
            if let Ok(d) = palette_diversity(&pred, space) {
                div.push(d);
            }
        }
        GenerationMetrics {
            pairs: cases.len(),
            parse_failures: cases
                .iter()
                .filter(|c| matches!(c.status, CaseStatus::ParseFailure(_)))
                .count(),
            provider_failures: cases
                .iter()
                .filter(|c| matches!(c.status, CaseStatus::ProviderFailure(_)))
                .count(),
            similarity: Stat::of(&sim).map(Stat::rounded),
            similarity_chamfer: Stat::of(&chamfer_sim).map(Stat::rounded),
            diversity: Stat::of(&div).map(Stat::rounded),
            ground_truth_diversity: Stat::of(&gt_div).map(Stat::rounded),
        }
    }
}

/// What produced a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub label: String,
    pub model: String,
    pub prompt: PromptConfig,
    pub template_hash: String,
    pub embedder: String,
    pub seed: u64,
    pub temperature: f64,
    pub similarity_strategy: SimilarityStrategy,
    pub color_space: ColorSpace,
    /// Free-form notes on choices that affect the numbers.
    pub decisions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub metadata: RunMetadata,
    /// Set when any case failed at the provider.
    pub incomplete: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion: Option<CompletionMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<GenerationMetrics>,
    pub cases: Vec<CaseRecord>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(hex: &str) -> Color {
        Color::from_hex(hex).unwrap()
    }

    #[test]
    fn accuracy_requires_every_slot() {
        let w = Color::WHITE;
        let k = Color::BLACK;
        let cases = vec![(vec![w, k], vec![w, w]), (vec![w], vec![Color::new(250, 250, 250)])];
        assert_eq!(bin_accuracy(&cases).unwrap(), 50.0);
        assert!(matches!(
            bin_accuracy(&[(vec![w], vec![w, k])]),
            Err(MetricsError::LengthMismatch { case: 0, .. })
        ));
        assert_eq!(bin_accuracy(&[]), Err(MetricsError::Empty));
    }

    #[test]
    fn distribution_analytic_cases() {
        assert_eq!(distribution(&[c("#000000"), c("#010101")]).unwrap(), 0.0);
        let four = [c("#000000"), c("#ffffff"), c("#ff0000"), c("#00ff00")];
        assert!((distribution(&four).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert!(distribution(&[]).is_err());
    }

    #[test]
    fn white_black_endpoints() {
        let w = Palette::from_colors([Color::WHITE]).unwrap();
        let k = Palette::from_colors([Color::BLACK]).unwrap();
        for s in [SimilarityStrategy::MinAssignment, SimilarityStrategy::Chamfer] {
            assert!((palette_similarity(&w, &k, s, ColorSpace::Lab).unwrap() - 100.0).abs() < 0.5);
        }
        let wk = Palette::from_colors([Color::WHITE, Color::BLACK]).unwrap();
        assert!((palette_diversity(&wk, ColorSpace::Lab).unwrap() - 100.0).abs() < 0.5);
        assert_eq!(
            palette_diversity(&w, ColorSpace::Lab),
            Err(MetricsError::TooFewColors(1))
        );
    }

    #[test]
    fn unequal_lengths_use_every_short_color() {
        let p = [Color::WHITE, Color::WHITE, Color::BLACK];
        let q = [Color::WHITE, Color::BLACK];
        assert!(min_assignment(&p, &q, ColorSpace::Lab) < 1e-9);
        let q = [Color::WHITE];
        let d = min_assignment(&p, &q, ColorSpace::Lab);
        assert!((d - 100.0 / 3.0).abs() < 0.2, "{d}");
    }

    #[test]
    fn surjection_counts() {
        assert_eq!(surjections(3, 3).len(), 6);
        assert_eq!(surjections(5, 5).len(), 120);
        assert_eq!(surjections(4, 2).len(), 14);
        assert_eq!(surjections(5, 1).len(), 1);
    }

    #[test]
    fn stat_is_population() {
        let s = Stat::of(&[1.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std), (2.0, 1.0));
        assert!(Stat::of(&[]).is_none());
    }
}
