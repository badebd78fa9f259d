//! The attack model and the cycle mechanics shared by both engines.
//!
//! A cycle starts when the chain starts or is reset. The IT department's
//! detecting time `Y` is drawn once; the hacker breaches nodes one after
//! another with i.i.d. hacking times `X_i`. If the `m`-th breach completes
//! strictly before `Y` the chain is hacked, otherwise it is reset at `Y` and
//! all progress is lost.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{sum_dist, DistributionSpec, Sampler, SumDistribution};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    /// Alter or delete data: needs a majority of nodes.
    Destructive,
    /// Lock all data: needs every node.
    Ransom,
}

/// Number of nodes the hacker must breach: ⌊n/2⌋ + 1 for a destructive
/// attack, n for a ransom attack.
pub fn nodes_to_threshold(n: u32, kind: AttackKind) -> Result<u32> {
    if n < 2 {
        return Err(Error::domain(format!("a blockchain needs at least 2 nodes, got {n}")));
    }
    Ok(match kind {
        AttackKind::Destructive => n / 2 + 1,
        AttackKind::Ransom => n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct AttackModel {
    nodes: Option<u32>,
    kind: AttackKind,
    hack_time: DistributionSpec,
    detect_time: DistributionSpec,
    threshold: u32,
    overridden: bool,
}

impl AttackModel {
    pub fn new(n: u32, kind: AttackKind, hack_time: DistributionSpec, detect_time: DistributionSpec) -> Result<Self> {
        let threshold = nodes_to_threshold(n, kind)?;
        Ok(Self { nodes: Some(n), kind, hack_time, detect_time, threshold, overridden: false })
    }

    /// A model addressed directly by its threshold m, as in the m = 1..40 sweeps.
    pub fn with_threshold(m: u32, hack_time: DistributionSpec, detect_time: DistributionSpec) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("threshold m must be at least 1"));
        }
        Ok(Self { nodes: None, kind: AttackKind::Destructive, hack_time, detect_time, threshold: m, overridden: true })
    }

    /// Same distributions, threshold replaced by `m`.
    pub fn at_threshold(&self, m: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("threshold m must be at least 1"));
        }
        Ok(Self { threshold: m, overridden: true, ..self.clone() })
    }

    pub fn m(&self) -> u32 {
        self.threshold
    }

    pub fn nodes(&self) -> Option<u32> {
        self.nodes
    }

    pub fn kind(&self) -> AttackKind {
        self.kind
    }

    pub fn hack_time(&self) -> &DistributionSpec {
        &self.hack_time
    }

    pub fn detect_time(&self) -> &DistributionSpec {
        &self.detect_time
    }

    /// Law of X₁ + … + X_m.
    pub fn hack_sum(&self) -> Result<SumDistribution> {
        sum_dist(&self.hack_time, self.threshold)
    }

    /// A draw source backed by this model's distributions and `rng`.
    pub fn draws<R: Rng>(&self, rng: R) -> ModelDraws<R> {
        ModelDraws { hack: self.hack_time.sampler(), detect: self.detect_time.sampler(), rng }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<u32>,
    #[serde(default = "default_kind")]
    kind: AttackKind,
    hack_time: DistributionSpec,
    detect_time: DistributionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m_override: Option<u32>,
}

fn default_kind() -> AttackKind {
    AttackKind::Destructive
}

impl TryFrom<RawModel> for AttackModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        let model = match (raw.n, raw.m_override) {
            (Some(n), None) => AttackModel::new(n, raw.kind, raw.hack_time, raw.detect_time)?,
            (n, Some(m)) => {
                if let Some(n) = n {
                    nodes_to_threshold(n, raw.kind).map_err(|e| Error::config(e.to_string()))?;
                }
                let mut model = AttackModel::with_threshold(m, raw.hack_time, raw.detect_time)
                    .map_err(|e| Error::config(e.to_string()))?;
                model.nodes = n;
                model.kind = raw.kind;
                model
            }
            (None, None) => return Err(Error::config("model needs \"n\" or \"m_override\"")),
        };
        Ok(model)
    }
}

impl From<AttackModel> for RawModel {
    fn from(model: AttackModel) -> Self {
        RawModel {
            n: model.nodes,
            kind: model.kind,
            hack_time: model.hack_time,
            detect_time: model.detect_time,
            m_override: model.overridden.then_some(model.threshold),
        }
    }
}

/// How a cycle ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CycleOutcome {
    /// Detected first; the cycle lasted the detecting time `Y`.
    Reset(f64),
    /// All `m` breaches finished first; the cycle lasted `X₁ + … + X_m`.
    Hacked(f64),
}

impl CycleOutcome {
    pub fn duration(&self) -> f64 {
        match *self {
            CycleOutcome::Reset(d) | CycleOutcome::Hacked(d) => d,
        }
    }

    pub fn is_hacked(&self) -> bool {
        matches!(self, CycleOutcome::Hacked(_))
    }
}

/// Source of detecting and hacking times for the cycle simulator.
pub trait DrawSource {
    fn detect_time(&mut self) -> f64;
    fn hack_time(&mut self) -> f64;
}

pub struct ModelDraws<R> {
    hack: Sampler,
    detect: Sampler,
    rng: R,
}

impl<R: Rng> DrawSource for ModelDraws<R> {
    #[inline]
    fn detect_time(&mut self) -> f64 {
        self.detect.sample(&mut self.rng)
    }

    #[inline]
    fn hack_time(&mut self) -> f64 {
        self.hack.sample(&mut self.rng)
    }
}

/// Plays one cycle: one `Y` draw, then `X` draws until either the partial sum
/// reaches `Y` (reset; ties count as detection) or `m` breaches are done.
#[inline]
pub fn play_cycle<S: DrawSource + ?Sized>(m: u32, source: &mut S) -> CycleOutcome {
    let detect = source.detect_time();
    let mut elapsed = 0.0;
    for _ in 0..m {
        elapsed += source.hack_time();
        if detect <= elapsed {
            return CycleOutcome::Reset(detect);
        }
    }
    CycleOutcome::Hacked(elapsed)
}


#[cfg(test)]
mod tests {
    use super::testing::ScriptedDraws;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn thresholds() {
        assert_eq!(nodes_to_threshold(5, AttackKind::Destructive).unwrap(), 3);
        assert_eq!(nodes_to_threshold(2, AttackKind::Destructive).unwrap(), 2);
        assert_eq!(nodes_to_threshold(9, AttackKind::Destructive).unwrap(), 5);
        assert_eq!(nodes_to_threshold(7, AttackKind::Ransom).unwrap(), 7);
        assert!(matches!(nodes_to_threshold(1, AttackKind::Destructive), Err(Error::Domain(_))));
    }

    #[test]
    fn hacked_when_breach_beats_detection() {
        let mut s = ScriptedDraws::new(&[5.0], &[2.0]);
        assert_eq!(play_cycle(1, &mut s), CycleOutcome::Hacked(2.0));
    }

    #[test]
    fn reset_when_detection_comes_first() {
        let mut s = ScriptedDraws::new(&[3.5], &[1.0, 3.0]);
        assert_eq!(play_cycle(2, &mut s), CycleOutcome::Reset(3.5));
    }

    #[test]
    fn tie_counts_as_detection() {
        let mut s = ScriptedDraws::new(&[4.0], &[1.0, 3.0]);
        assert_eq!(play_cycle(2, &mut s), CycleOutcome::Reset(4.0));
    }

    #[test]
    fn early_exit_leaves_later_draws_unconsumed() {
        let mut s = ScriptedDraws::new(&[1.0], &[2.0, 0.1, 0.1]);
        assert_eq!(play_cycle(3, &mut s), CycleOutcome::Reset(1.0));
        assert_eq!(s.hack.len(), 2);
    }

    #[test]
    fn replay_is_bit_identical() {
        let model = AttackModel::with_threshold(
            4,
            DistributionSpec::gamma(0.5, 2.0).unwrap(),
            DistributionSpec::weibull(2.0, 1.5).unwrap(),
        )
        .unwrap();
        let run = || {
            let mut d = model.draws(ChaCha8Rng::seed_from_u64(99));
            (0..1000).map(|_| play_cycle(model.m(), &mut d)).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn hacked_fraction_matches_mgf_oracle() {
        // p_m = (λ/(λ+δ))^m for exponential hacking (λ) and detecting (δ) times.
        let model = AttackModel::with_threshold(
            2,
            DistributionSpec::exponential(0.2).unwrap(),
            DistributionSpec::exponential(3.0).unwrap(),
        )
        .unwrap();
        let n = 100_000;
        let mut d = model.draws(ChaCha8Rng::seed_from_u64(2024));
        let hacked = (0..n).filter(|_| play_cycle(2, &mut d).is_hacked()).count();
        let p = (0.2f64 / 3.2).powi(2);
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hacked as f64 / n as f64 - p).abs() < 3.0 * se, "{hacked}");
    }

    #[test]
    fn json_schema() {
        let json = r#"{"n":9,"kind":"destructive","hack_time":{"family":"exponential","rate":0.2},
                       "detect_time":{"family":"exponential","rate":3}}"#;
        let m: AttackModel = serde_json::from_str(json).unwrap();
        assert_eq!(m.m(), 5);
        assert_eq!(m.nodes(), Some(9));

        let json = r#"{"kind":"ransom","hack_time":{"family":"exponential","rate":0.2},
                       "detect_time":{"family":"exponential","rate":3},"m_override":17}"#;
        let m: AttackModel = serde_json::from_str(json).unwrap();
        assert_eq!(m.m(), 17);
        let back: AttackModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);

        for bad in [
            r#"{"n":1,"hack_time":{"family":"exponential","rate":1},"detect_time":{"family":"exponential","rate":1}}"#,
            r#"{"hack_time":{"family":"exponential","rate":1},"detect_time":{"family":"exponential","rate":1}}"#,
            r#"{"n":3,"hack_time":{"family":"exponential","rate":1},"detect_time":{"family":"exponential","rate":1},"x":1}"#,
            r#"{"n":3,"hack_time":{"family":"exponential","rate":-1},"detect_time":{"family":"exponential","rate":1}}"#,
            r#"{"m_override":0,"hack_time":{"family":"exponential","rate":1},"detect_time":{"family":"exponential","rate":1}}"#,
        ] {
            assert!(serde_json::from_str::<AttackModel>(bad).is_err(), "{bad}");
        }
    }
}
