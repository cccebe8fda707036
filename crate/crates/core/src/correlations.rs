//! Joint outcome distributions for the two photons.
//!
//! Conventions used throughout:
//! - the polarizing splitters transmit H (outcome `+1`) and reflect V (`-1`);
//! - a wave plate at angle θ acts as `H → cos θ·H + sin θ·V`, `V → −sin θ·H + cos θ·V`;
//! - outcome pairs are ordered `(++, +−, −+, −−)` everywhere, including sampling.
//!
//! The closed forms are what the simulator samples from. The state-vector
//! path exists to check them.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::relativity::{ExperimentClass, ImpactClass};

const NORM_TOLERANCE: f64 = 1e-12;

/// Wave-plate rotation angles in radians, side 1 then side 2.
///
/// Values are stored as given; every distribution built from them is
/// π-periodic in each angle, see [`AngleSettings::canonical`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleSettings {
    pub alpha: f64,
    pub beta: f64,
}

impl AngleSettings {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::InvalidInput(format!(
                "angles must be finite, got (alpha = {alpha}, beta = {beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn from_degrees(alpha_deg: f64, beta_deg: f64) -> Result<Self> {
        Self::new(alpha_deg.to_radians(), beta_deg.to_radians())
    }

    /// Both angles reduced into `[0, π)`.
    pub fn canonical(&self) -> Self {
        use std::f64::consts::PI;
        Self {
            alpha: self.alpha.rem_euclid(PI),
            beta: self.beta.rem_euclid(PI),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    /// Transmitted port.
    Plus,
    /// Reflected port.
    Minus,
}

impl Outcome {
    pub fn value(&self) -> i8 {
        match self {
            Outcome::Plus => 1,
            Outcome::Minus => -1,
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Outcome pairs in table order.
pub const OUTCOME_PAIRS: [(Outcome, Outcome); 4] = [
    (Outcome::Plus, Outcome::Plus),
    (Outcome::Plus, Outcome::Minus),
    (Outcome::Minus, Outcome::Plus),
    (Outcome::Minus, Outcome::Minus),
];

fn pair_index(first: Outcome, second: Outcome) -> usize {
    match (first, second) {
        (Outcome::Plus, Outcome::Plus) => 0,
        (Outcome::Plus, Outcome::Minus) => 1,
        (Outcome::Minus, Outcome::Plus) => 2,
        (Outcome::Minus, Outcome::Minus) => 3,
    }
}

/// Probabilities of the four outcome pairs, in `(++, +−, −+, −−)` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointDistribution {
    p: [f64; 4],
}

impl JointDistribution {
    pub fn from_probabilities(p: [f64; 4]) -> Result<Self> {
        if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidInput(format!("probabilities must be finite and non-negative, got {p:?}")));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::InvalidInput(format!("probabilities sum to {total}, expected 1")));
        }
        Ok(Self { p })
    }

    /// The unique distribution with uniform marginals and correlation `e`.
    fn with_uniform_marginals(e: f64) -> Self {
        let same = (1.0 + e) / 4.0;
        let diff = (1.0 - e) / 4.0;
        Self {
            p: [same, diff, diff, same],
        }
    }

    pub fn probabilities(&self) -> [f64; 4] {
        self.p
    }

    pub fn get(&self, first: Outcome, second: Outcome) -> f64 {
        self.p[pair_index(first, second)]
    }

    /// E = Σ σω·p(σ, ω).
    pub fn correlation(&self) -> f64 {
        (self.p[0] + self.p[3]) - (self.p[1] + self.p[2])
    }

    pub fn marginal_first_plus(&self) -> f64 {
        self.p[0] + self.p[1]
    }

    pub fn marginal_second_plus(&self) -> f64 {
        self.p[0] + self.p[2]
    }

    /// Inverse-transform lookup of a uniform draw in `[0, 1)`.
    pub fn sample(&self, u: f64) -> (Outcome, Outcome) {
        let mut acc = 0.0;
        for (k, &pk) in self.p.iter().enumerate().take(3) {
            acc += pk;
            if u < acc {
                return OUTCOME_PAIRS[k];
            }
        }
        OUTCOME_PAIRS[3]
    }
}

/// Two-photon polarization amplitudes over `{H₁H₂, H₁V₂, V₁H₂, V₁V₂}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateVector {
    pub amplitudes: [Complex64; 4],
}

impl StateVector {
    pub fn new(amplitudes: [Complex64; 4]) -> Result<Self> {
        let state = Self { amplitudes };
        state.check_normalized()?;
        Ok(state)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    fn check_normalized(&self) -> Result<()> {
        let n = self.norm_sqr();
        if (n - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::InvalidState(format!("squared norm is {n}, expected 1")));
        }
        Ok(())
    }
}

/// (|HH⟩ − |VV⟩)/√2.
pub fn bell_state() -> StateVector {
    StateVector {
        amplitudes: [
            Complex64::new(FRAC_1_SQRT_2, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(-FRAC_1_SQRT_2, 0.0),
        ],
    }
}

fn rotation(theta: f64) -> [[f64; 2]; 2] {
    let (s, c) = theta.sin_cos();
    // columns are the images of H and V
    [[c, -s], [s, c]]
}

/// Applies `R(α) ⊗ R(β)` to a two-photon state.
pub fn apply_wave_plates(state: &StateVector, angles: &AngleSettings) -> StateVector {
    let ra = rotation(angles.alpha);
    let rb = rotation(angles.beta);
    let mut out = [Complex64::new(0.0, 0.0); 4];
    for (row, slot) in out.iter_mut().enumerate() {
        let (i, j) = (row / 2, row % 2);
        for (col, amp) in state.amplitudes.iter().enumerate() {
            let (k, l) = (col / 2, col % 2);
            *slot += ra[i][k] * rb[j][l] * amp;
        }
    }
    StateVector { amplitudes: out }
}

/// Measurement statistics read directly off the rotated state vector.
pub fn oracle_joint_distribution(state: &StateVector, angles: &AngleSettings) -> Result<JointDistribution> {
    state.check_normalized()?;
    let rotated = apply_wave_plates(state, angles);
    // H ↦ +1 and V ↦ −1 on each side, so basis order equals outcome order
    let p = rotated.amplitudes.map(|a| a.norm_sqr());
    let total: f64 = p.iter().sum();
    Ok(JointDistribution { p: p.map(|x| x / total) })
}

/// Entangled prediction, E = cos 2(α+β).
pub fn qm_joint_distribution(angles: &AngleSettings) -> JointDistribution {
    JointDistribution::with_uniform_marginals((2.0 * (angles.alpha + angles.beta)).cos())
}

/// Local prediction (each photon uses only its own setting), E = cos 2α·cos 2β.
pub fn local_joint_distribution(angles: &AngleSettings) -> JointDistribution {
    JointDistribution::with_uniform_marginals((2.0 * angles.alpha).cos() * (2.0 * angles.beta).cos())
}

/// What to do when both impacts are non-before events, a case the model
/// leaves undefined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonBeforePolicy {
    #[default]
    Error,
    TreatAsQm,
    TreatAsLocal,
}

impl fmt::Display for NonBeforePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NonBeforePolicy::Error => "error",
            NonBeforePolicy::TreatAsQm => "treat-as-qm",
            NonBeforePolicy::TreatAsLocal => "treat-as-local",
        })
    }
}

/// Timing-dependent prediction selected by the experiment class.
pub fn ad_joint_distribution(
    class: ExperimentClass,
    angles: &AngleSettings,
    nonbefore_policy: NonBeforePolicy,
) -> Result<JointDistribution> {
    use ImpactClass::*;
    match (class.first(), class.second()) {
        (Distinguishable, _) | (_, Distinguishable) => Ok(local_joint_distribution(angles)),
        (Before, Before) => Ok(local_joint_distribution(angles)),
        (Before, NonBefore) | (NonBefore, Before) => Ok(qm_joint_distribution(angles)),
        (NonBefore, NonBefore) => match nonbefore_policy {
            NonBeforePolicy::Error => Err(Error::UnsupportedConfiguration { class }),
            NonBeforePolicy::TreatAsQm => Ok(qm_joint_distribution(angles)),
            NonBeforePolicy::TreatAsLocal => Ok(local_joint_distribution(angles)),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI};

    fn angles(a: f64, b: f64) -> AngleSettings {
        AngleSettings::new(a, b).unwrap()
    }

    fn assert_close(a: [f64; 4], b: [f64; 4], tol: f64) {
        for k in 0..4 {
            assert!((a[k] - b[k]).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    // Equal mixture of definite (H,H) and (V,V) pairs measured independently.
    fn mixture_oracle(a: f64, b: f64) -> [f64; 4] {
        let h_plus = |t: f64| t.cos().powi(2);
        let v_plus = |t: f64| t.sin().powi(2);
        let branch = |p1: f64, p2: f64| [p1 * p2, p1 * (1.0 - p2), (1.0 - p1) * p2, (1.0 - p1) * (1.0 - p2)];
        let hh = branch(h_plus(a), h_plus(b));
        let vv = branch(v_plus(a), v_plus(b));
        [0, 1, 2, 3].map(|k| 0.5 * (hh[k] + vv[k]))
    }

    #[test]
    fn bell_state_amplitudes() {
        let s = bell_state();
        assert!((s.norm_sqr() - 1.0).abs() < 1e-15);
        assert_eq!(s.amplitudes[1], Complex64::new(0.0, 0.0));
        assert_eq!(s.amplitudes[2], Complex64::new(0.0, 0.0));
        assert_eq!(s.amplitudes[3].re, -FRAC_1_SQRT_2);
    }

    #[test]
    fn wave_plate_rotations() {
        let s = bell_state();
        assert_eq!(apply_wave_plates(&s, &angles(0.0, 0.0)), s);

        // H→V, V→−H on both sides maps the state to minus itself
        let r = apply_wave_plates(&s, &angles(FRAC_PI_2, FRAC_PI_2));
        for k in 0..4 {
            assert!((r.amplitudes[k] + s.amplitudes[k]).norm() < 1e-15);
        }

        let generic = StateVector::new([
            Complex64::new(0.5, 0.0),
            Complex64::new(0.0, 0.5),
            Complex64::new(-0.5, 0.0),
            Complex64::new(0.0, -0.5),
        ])
        .unwrap();
        let r = apply_wave_plates(&generic, &angles(PI, 0.0));
        for k in 0..4 {
            assert!((r.amplitudes[k] + generic.amplitudes[k]).norm() < 1e-15);
        }
    }

    #[test]
    fn oracle_rejects_unnormalized_state() {
        let s = StateVector {
            amplitudes: [Complex64::new(1.0, 0.0); 4],
        };
        assert!(matches!(
            oracle_joint_distribution(&s, &angles(0.0, 0.0)),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn oracle_examples() {
        let s = bell_state();
        let d = oracle_joint_distribution(&s, &angles(0.0, 0.0)).unwrap();
        assert_close(d.probabilities(), [0.5, 0.0, 0.0, 0.5], 1e-15);

        let d = oracle_joint_distribution(&s, &angles(FRAC_PI_8, FRAC_PI_8)).unwrap();
        assert_close(d.probabilities(), [0.25; 4], 1e-15);
        assert!(d.correlation().abs() < 1e-15);

        for k in 0..20 {
            let a = 0.17 * k as f64;
            let d = oracle_joint_distribution(&s, &angles(a, -a)).unwrap();
            assert!((d.get(Outcome::Plus, Outcome::Plus) - 0.5).abs() < 1e-15);
            assert!((d.get(Outcome::Minus, Outcome::Minus) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn qm_closed_form_examples() {
        let d = qm_joint_distribution(&angles(FRAC_PI_4, -FRAC_PI_4));
        assert_eq!(d.correlation(), 1.0);
        assert_eq!(d.probabilities(), [0.5, 0.0, 0.0, 0.5]);

        let d = qm_joint_distribution(&angles(FRAC_PI_4, 0.0));
        assert_close(d.probabilities(), [0.25; 4], 1e-15);
        let o = oracle_joint_distribution(&bell_state(), &angles(FRAC_PI_4, 0.0)).unwrap();
        assert_close(d.probabilities(), o.probabilities(), 1e-12);

        let d = qm_joint_distribution(&angles(FRAC_PI_2, 0.0));
        assert!((d.correlation() + 1.0).abs() < 1e-15);
        assert_close(d.probabilities(), [0.0, 0.5, 0.5, 0.0], 1e-15);
    }

    #[test]
    fn local_closed_form_examples() {
        let d = local_joint_distribution(&angles(FRAC_PI_4, -FRAC_PI_4));
        assert!(d.correlation().abs() < 1e-15);
        assert_close(d.probabilities(), [0.25; 4], 1e-15);

        let d = local_joint_distribution(&angles(0.0, 0.0));
        assert_eq!(d.correlation(), 1.0);

        let d = local_joint_distribution(&angles(FRAC_PI_8, FRAC_PI_8));
        assert!((d.correlation() - 0.5).abs() < 1e-15);
        assert_close(d.probabilities(), mixture_oracle(FRAC_PI_8, FRAC_PI_8), 1e-15);
    }

    #[test]
    fn ad_selection_rule() {
        use ImpactClass::*;
        let a = angles(FRAC_PI_4, -FRAC_PI_4);
        let d = ad_joint_distribution(ExperimentClass(Before, NonBefore), &a, NonBeforePolicy::Error).unwrap();
        assert_eq!(d.correlation(), 1.0);
        let d = ad_joint_distribution(ExperimentClass(NonBefore, Before), &a, NonBeforePolicy::Error).unwrap();
        assert_eq!(d, qm_joint_distribution(&a));
        let d = ad_joint_distribution(ExperimentClass(Before, Before), &a, NonBeforePolicy::Error).unwrap();
        assert!(d.correlation().abs() < 1e-15);

        let b = angles(0.3, 1.1);
        for class in [ExperimentClass(Distinguishable, Before), ExperimentClass(Before, Distinguishable), ExperimentClass(Distinguishable, Distinguishable)] {
            let d = ad_joint_distribution(class, &b, NonBeforePolicy::Error).unwrap();
            assert_eq!(d, local_joint_distribution(&b));
        }
    }

    #[test]
    fn non_before_pair_follows_policy() {
        use ImpactClass::*;
        let class = ExperimentClass(NonBefore, NonBefore);
        let a = angles(0.4, 0.2);
        let err = ad_joint_distribution(class, &a, NonBeforePolicy::Error).unwrap_err();
        assert!(err.to_string().contains("(NonBefore, NonBefore)"));
        assert_eq!(ad_joint_distribution(class, &a, NonBeforePolicy::TreatAsQm).unwrap(), qm_joint_distribution(&a));
        assert_eq!(
            ad_joint_distribution(class, &a, NonBeforePolicy::TreatAsLocal).unwrap(),
            local_joint_distribution(&a)
        );
    }

    #[test]
    fn sampling_uses_fixed_order() {
        let d = JointDistribution::from_probabilities([0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(d.sample(0.0), OUTCOME_PAIRS[0]);
        assert_eq!(d.sample(0.15), OUTCOME_PAIRS[1]);
        assert_eq!(d.sample(0.45), OUTCOME_PAIRS[2]);
        assert_eq!(d.sample(0.65), OUTCOME_PAIRS[3]);
        assert_eq!(d.sample(0.999_999), OUTCOME_PAIRS[3]);

        let perfect = qm_joint_distribution(&angles(FRAC_PI_4, -FRAC_PI_4));
        for k in 0..1000 {
            let (s, o) = perfect.sample(k as f64 / 1000.0);
            assert_eq!(s, o);
        }
    }

    #[test]
    fn from_probabilities_validates() {
        assert!(JointDistribution::from_probabilities([0.5, 0.5, 0.5, -0.5]).is_err());
        assert!(JointDistribution::from_probabilities([0.3, 0.3, 0.3, 0.3]).is_err());
        assert!(JointDistribution::from_probabilities([0.25; 4]).is_ok());
    }

    #[test]
    fn closed_forms_match_oracles_on_grid() {
        let n = 181;
        let step = PI / n as f64;
        let bell = bell_state();
        for i in 0..n {
            for j in 0..n {
                let (a, b) = (i as f64 * step, j as f64 * step);
                let s = angles(a, b);
                let qm = qm_joint_distribution(&s);
                let oracle = oracle_joint_distribution(&bell, &s).unwrap();
                assert_close(qm.probabilities(), oracle.probabilities(), 1e-12);
                assert!((qm.correlation() - (2.0 * (a + b)).cos()).abs() < 1e-12);

                let local = local_joint_distribution(&s);
                assert_close(local.probabilities(), mixture_oracle(a, b), 1e-12);
                assert!((local.correlation() - (2.0 * a).cos() * (2.0 * b).cos()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn canonical_reduction() {
        let s = angles(-FRAC_PI_4, 5.0 * PI / 4.0).canonical();
        assert!((s.alpha - 3.0 * FRAC_PI_4).abs() < 1e-15);
        assert!((s.beta - FRAC_PI_4).abs() < 1e-14);
        assert!(AngleSettings::new(f64::NAN, 0.0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn marginals_are_uniform(a in -10.0f64..10.0, b in -10.0f64..10.0) {
                for d in [qm_joint_distribution(&angles(a, b)), local_joint_distribution(&angles(a, b))] {
                    prop_assert!((d.marginal_first_plus() - 0.5).abs() < 1e-15);
                    prop_assert!((d.marginal_second_plus() - 0.5).abs() < 1e-15);
                    let total: f64 = d.probabilities().iter().sum();
                    prop_assert!((total - 1.0).abs() < 1e-12);
                }
            }

            #[test]
            fn closed_forms_are_symmetric_and_periodic(a in -10.0f64..10.0, b in -10.0f64..10.0) {
                for f in [qm_joint_distribution, local_joint_distribution] {
                    let d = f(&angles(a, b)).probabilities();
                    let swapped = f(&angles(b, a)).probabilities();
                    // swapping sides exchanges the +− and −+ entries
                    prop_assert!((d[0] - swapped[0]).abs() < 1e-12);
                    prop_assert!((d[1] - swapped[2]).abs() < 1e-12);
                    prop_assert!((d[2] - swapped[1]).abs() < 1e-12);
                    prop_assert!((d[3] - swapped[3]).abs() < 1e-12);
                    let shifted = f(&angles(a + PI, b)).probabilities();
                    for k in 0..4 {
                        prop_assert!((d[k] - shifted[k]).abs() < 1e-12);
                    }
                }
            }

            #[test]
            fn ad_equals_qm_when_one_impact_leads(a in -10.0f64..10.0, b in -10.0f64..10.0, flip in any::<bool>()) {
                use ImpactClass::*;
                let class = if flip { ExperimentClass(NonBefore, Before) } else { ExperimentClass(Before, NonBefore) };
                let s = angles(a, b);
                prop_assert_eq!(ad_joint_distribution(class, &s, NonBeforePolicy::Error).unwrap(), qm_joint_distribution(&s));
            }
        }
    }
}
