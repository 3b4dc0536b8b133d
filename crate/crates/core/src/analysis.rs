//! Output diffing, error geometry, outcome taxonomy and campaign statistics.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::numerics::{self, Precision};
use crate::simt::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ComparePolicy {
    /// Bitwise equality; NaN equals NaN with the same payload.
    #[default]
    Exact,
    /// `|observed - golden| <= eps * |golden|`; NaN is never equal.
    Epsilon(f64),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Diff {
    pub dims: (usize, usize),
    /// Corrupted coordinate → (golden word, observed word).
    pub corrupted: BTreeMap<(usize, usize), (u32, u32)>,
}

impl Diff {
    pub fn is_empty(&self) -> bool {
        self.corrupted.is_empty()
    }

    pub fn len(&self) -> usize {
        self.corrupted.len()
    }

    pub fn coords(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.corrupted.keys().copied()
    }
}

fn words_equal(g: u32, o: u32, precision: Precision, policy: ComparePolicy) -> bool {
    match policy {
        ComparePolicy::Exact => g == o,
        ComparePolicy::Epsilon(eps) => {
            let (g, o) = (numerics::to_f64(g, precision), numerics::to_f64(o, precision));
            if g.is_nan() || o.is_nan() {
                false
            } else if g.is_infinite() || o.is_infinite() {
                g == o
            } else {
                libm::fabs(o - g) <= eps * libm::fabs(g)
            }
        }
    }
}

pub fn diff(golden: &Matrix, observed: &Matrix, policy: ComparePolicy) -> Result<Diff> {
    if golden.dims() != observed.dims() || golden.precision != observed.precision {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{} {}", golden.rows, golden.cols, golden.precision),
            actual: format!("{}x{} {}", observed.rows, observed.cols, observed.precision),
        });
    }
    let mut corrupted = BTreeMap::new();
    for (idx, (&g, &o)) in golden.data.iter().zip(&observed.data).enumerate() {
        if !words_equal(g, o, golden.precision, policy) {
            corrupted.insert((idx / golden.cols, idx % golden.cols), (g, o));
        }
    }
    Ok(Diff { dims: golden.dims(), corrupted })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GeometryClass {
    Single,
    Line,
    Square,
    Random,
}

impl GeometryClass {
    pub const ALL: [GeometryClass; 4] = [GeometryClass::Single, GeometryClass::Line, GeometryClass::Square, GeometryClass::Random];

    pub const fn name(self) -> &'static str {
        match self {
            GeometryClass::Single => "single",
            GeometryClass::Line => "line",
            GeometryClass::Square => "square",
            GeometryClass::Random => "random",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.name() == s)
    }

    const fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for GeometryClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const DEFAULT_SQUARE_DENSITY: f64 = 0.5;

/// Geometry with the default Square density threshold.
pub fn classify_geometry(d: &Diff) -> Result<GeometryClass> {
    classify_coords(d.coords(), DEFAULT_SQUARE_DENSITY)
}

/// Single > Line > Square > Random, first match wins.
pub fn classify_coords(coords: impl IntoIterator<Item = (usize, usize)>, square_density: f64) -> Result<GeometryClass> {
    let mut n = 0usize;
    let mut rows = BTreeMap::new();
    let mut cols = BTreeMap::new();
    for (r, c) in coords {
        n += 1;
        *rows.entry(r).or_insert(0usize) += 1;
        *cols.entry(c).or_insert(0usize) += 1;
    }
    if n == 0 {
        return Err(Error::contract("geometry of an empty diff"));
    }
    if n == 1 {
        return Ok(GeometryClass::Single);
    }
    if rows.len() == 1 || cols.len() == 1 {
        return Ok(GeometryClass::Line);
    }
    let span = |m: &BTreeMap<usize, usize>| m.keys().next_back().unwrap() - m.keys().next().unwrap() + 1;
    let area = span(&rows) * span(&cols);
    if n >= 4 && n as f64 / area as f64 >= square_density {
        Ok(GeometryClass::Square)
    } else {
        Ok(GeometryClass::Random)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CriticalKind {
    FalsePositive,
    Misdetection,
    ClassChange,
    BoxDrift,
}

impl CriticalKind {
    pub const ALL: [CriticalKind; 4] =
        [CriticalKind::FalsePositive, CriticalKind::Misdetection, CriticalKind::ClassChange, CriticalKind::BoxDrift];

    pub const fn name(self) -> &'static str {
        match self {
            CriticalKind::FalsePositive => "false-positive",
            CriticalKind::Misdetection => "misdetection",
            CriticalKind::ClassChange => "class-change",
            CriticalKind::BoxDrift => "box-drift",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Criticality {
    Tolerable,
    Critical(CriticalKind),
}

impl Criticality {
    pub fn is_critical(self) -> bool {
        matches!(self, Criticality::Critical(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DueReason {
    Hang,
    Crash,
    EccDoubleBit,
}

impl DueReason {
    pub const ALL: [DueReason; 3] = [DueReason::Hang, DueReason::Crash, DueReason::EccDoubleBit];

    pub const fn name(self) -> &'static str {
        match self {
            DueReason::Hang => "hang",
            DueReason::Crash => "crash",
            DueReason::EccDoubleBit => "ecc-double-bit",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Outcome {
    Masked,
    Sdc { geometry: GeometryClass, criticality: Option<Criticality> },
    Due(DueReason),
}

impl Outcome {
    pub fn is_sdc(&self) -> bool {
        matches!(self, Outcome::Sdc { .. })
    }

    pub fn is_critical(&self) -> bool {
        matches!(self, Outcome::Sdc { criticality: Some(c), .. } if c.is_critical())
    }
}

/// Wilson score interval at 95% confidence.
pub fn ci95(k: u64, n: u64) -> Result<(f64, f64)> {
    if n == 0 || k > n {
        return Err(Error::contract(format!("ci95 needs 0 <= k <= n, n >= 1 (k={k}, n={n})")));
    }
    const Z: f64 = 1.96;
    let (kf, nf) = (k as f64, n as f64);
    let p = kf / nf;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = Z * libm::sqrt(p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)) / denom;
    let lo = if k == 0 { 0.0 } else { (center - half).clamp(0.0, p) };
    let hi = if k == n { 1.0 } else { (center + half).clamp(p, 1.0) };
    Ok((lo, hi))
}

/// Sea-level neutron flux, n/(cm²·h).
pub const SEA_LEVEL_FLUX: f64 = 13.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitParams {
    /// Particles per cm².
    pub fluence: f64,
    /// Particles per cm² per hour.
    pub reference_flux: f64,
}

impl FitParams {
    pub fn new(fluence: f64, reference_flux: f64) -> Result<Self> {
        let p = FitParams { fluence, reference_flux };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fluence > 0.0 && self.fluence.is_finite()) || !(self.reference_flux > 0.0 && self.reference_flux.is_finite()) {
            return Err(Error::contract("fluence and flux must be positive"));
        }
        Ok(())
    }
}

/// Cross-section in cm².
pub fn cross_section(n_errors: u64, params: &FitParams) -> Result<f64> {
    params.validate()?;
    Ok(n_errors as f64 / params.fluence)
}

/// Failures per 10⁹ device-hours.
pub fn fit(n_errors: u64, params: &FitParams) -> Result<f64> {
    Ok(cross_section(n_errors, params)? * params.reference_flux * 1e9)
}

/// A count with its fraction of all injections and Wilson interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fraction {
    pub count: u64,
    pub fraction: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl Fraction {
    pub fn new(count: u64, n: u64) -> Result<Self> {
        let (ci_lo, ci_hi) = ci95(count, n)?;
        Ok(Fraction { count, fraction: count as f64 / n as f64, ci_lo, ci_hi })
    }

    pub fn half_width(&self) -> f64 {
        (self.ci_hi - self.ci_lo) / 2.0
    }
}

/// Outcome counters; merging is commutative and associative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct CampaignStats {
    pub n_injections: u64,
    pub masked: u64,
    pub sdc: u64,
    pub due: [u64; 3],
    pub geometry: [u64; 4],
    pub tolerable: u64,
    pub critical: [u64; 4],
}

impl CampaignStats {
    pub fn record(&mut self, outcome: &Outcome) {
        self.n_injections += 1;
        match *outcome {
            Outcome::Masked => self.masked += 1,
            Outcome::Due(r) => self.due[r as usize] += 1,
            Outcome::Sdc { geometry, criticality } => {
                self.sdc += 1;
                self.geometry[geometry.index()] += 1;
                match criticality {
                    Some(Criticality::Tolerable) => self.tolerable += 1,
                    Some(Criticality::Critical(k)) => self.critical[k as usize] += 1,
                    None => {}
                }
            }
        }
    }

    pub fn merge(&mut self, other: &CampaignStats) {
        self.n_injections += other.n_injections;
        self.masked += other.masked;
        self.sdc += other.sdc;
        self.tolerable += other.tolerable;
        for (a, b) in self.due.iter_mut().zip(other.due) {
            *a += b;
        }
        for (a, b) in self.geometry.iter_mut().zip(other.geometry) {
            *a += b;
        }
        for (a, b) in self.critical.iter_mut().zip(other.critical) {
            *a += b;
        }
    }

    pub fn due_total(&self) -> u64 {
        self.due.iter().sum()
    }

    pub fn critical_total(&self) -> u64 {
        self.critical.iter().sum()
    }

    pub fn geometry_count(&self, g: GeometryClass) -> u64 {
        self.geometry[g.index()]
    }

    pub fn critical_count(&self, k: CriticalKind) -> u64 {
        self.critical[k as usize]
    }

    pub fn due_count(&self, r: DueReason) -> u64 {
        self.due[r as usize]
    }

    fn frac(&self, count: u64) -> Result<Fraction> {
        if self.n_injections == 0 {
            return Err(Error::contract("statistics need at least one injection"));
        }
        Fraction::new(count, self.n_injections)
    }

    /// SDC fraction of all injections.
    pub fn svf(&self) -> Result<Fraction> {
        self.frac(self.sdc)
    }

    pub fn svf_critical(&self) -> Result<Fraction> {
        self.frac(self.critical_total())
    }

    pub fn masked_fraction(&self) -> Result<Fraction> {
        self.frac(self.masked)
    }

    pub fn due_fraction(&self) -> Result<Fraction> {
        self.frac(self.due_total())
    }

    /// Every reported class as (name, fraction of all injections).
    pub fn classes(&self) -> Result<Vec<(&'static str, Fraction)>> {
        let mut out = alloc::vec![
            ("masked", self.frac(self.masked)?),
            ("sdc", self.frac(self.sdc)?),
            ("due", self.frac(self.due_total())?),
        ];
        for r in DueReason::ALL {
            out.push((r.name(), self.frac(self.due_count(r))?));
        }
        for g in GeometryClass::ALL {
            out.push((g.name(), self.frac(self.geometry_count(g))?));
        }
        out.push(("tolerable", self.frac(self.tolerable)?));
        out.push(("critical", self.frac(self.critical_total())?));
        for k in CriticalKind::ALL {
            out.push((k.name(), self.frac(self.critical_count(k))?));
        }
        Ok(out)
    }

    /// Fraction of SDCs falling in geometry class `g`.
    pub fn geometry_share(&self, g: GeometryClass) -> Option<f64> {
        (self.sdc > 0).then(|| self.geometry_count(g) as f64 / self.sdc as f64)
    }
}

/// Folds outcomes into statistics.
pub fn svf(outcomes: &[Outcome]) -> Result<CampaignStats> {
    if outcomes.is_empty() {
        return Err(Error::contract("statistics need at least one injection"));
    }
    let mut stats = CampaignStats::default();
    for o in outcomes {
        stats.record(o);
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coords(v: &[(usize, usize)]) -> Result<GeometryClass> {
        classify_coords(v.iter().copied(), DEFAULT_SQUARE_DENSITY)
    }

    #[test]
    fn geometry_examples() {
        assert_eq!(coords(&[(3, 5)]).unwrap(), GeometryClass::Single);
        assert_eq!(coords(&[(2, 0), (2, 5), (2, 9)]).unwrap(), GeometryClass::Line);
        assert_eq!(coords(&[(1, 1), (1, 2), (2, 1), (2, 2)]).unwrap(), GeometryClass::Square);
        assert_eq!(coords(&[(0, 0), (5, 9), (11, 3)]).unwrap(), GeometryClass::Random);
        assert_eq!(coords(&[(0, 0), (0, 1), (0, 2), (0, 3)]).unwrap(), GeometryClass::Line);
        assert!(coords(&[]).is_err());
    }

    #[test]
    fn wilson_reference_values() {
        let (lo, hi) = ci95(50, 100).unwrap();
        assert!((lo - 0.4038).abs() < 1e-3 && (hi - 0.5962).abs() < 1e-3, "{lo} {hi}");
        let (lo, hi) = ci95(0, 40).unwrap();
        assert!(lo == 0.0 && hi > 0.0);
        assert_eq!(ci95(40, 40).unwrap().1, 1.0);
        assert!(ci95(5, 4).is_err());
    }

    #[test]
    fn fit_reference_value() {
        let p = FitParams::new(1e10, SEA_LEVEL_FLUX).unwrap();
        assert!((cross_section(100, &p).unwrap() - 1e-8).abs() < 1e-20);
        assert!((fit(100, &p).unwrap() - 130.0).abs() < 1e-9);
        assert_eq!(fit(0, &p).unwrap(), 0.0);
        assert!(FitParams::new(0.0, 13.0).is_err());
    }

    #[test]
    fn epsilon_policy() {
        let g = Matrix::from_words(1, 3, Precision::Fp32, alloc::vec![0x3F80_0000, 0, 0x7FC0_0000]).unwrap();
        let o = Matrix::from_words(1, 3, Precision::Fp32, alloc::vec![0x3F80_0001, 0, 0x7FC0_0000]).unwrap();
        assert_eq!(diff(&g, &o, ComparePolicy::Exact).unwrap().len(), 1);
        let d = diff(&g, &o, ComparePolicy::Epsilon(1e-6)).unwrap();
        assert_eq!(d.coords().collect::<Vec<_>>(), alloc::vec![(0, 2)]);
    }

    #[test]
    fn stats_merge_matches_sequential() {
        let outs = [
            Outcome::Masked,
            Outcome::Due(DueReason::Hang),
            Outcome::Sdc { geometry: GeometryClass::Line, criticality: Some(Criticality::Critical(CriticalKind::BoxDrift)) },
            Outcome::Sdc { geometry: GeometryClass::Single, criticality: Some(Criticality::Tolerable) },
        ];
        let all = svf(&outs).unwrap();
        let mut a = svf(&outs[..1]).unwrap();
        a.merge(&svf(&outs[1..]).unwrap());
        assert_eq!(a, all);
        assert_eq!(all.classes().unwrap().len(), 16);
        assert!(svf(&[]).is_err());
    }
}
