//! Quasi-static simulator of a three-square-peg insertion under a
//! variable-admittance controller.
//!
//! Frames: the hole group is fixed with its top surface at `z = 0` and the
//! hole pattern centred on the origin. A [`Pose`] is the pose of the peg
//! group relative to the holes; its `z` is the height of the peg tips, so
//! the insertion depth is `-z`. Rotations are applied about the sensor
//! origin, which sits on the pattern axis at the top of the pegs.
//! Forces are those acting *on the pegs*; moments are taken about the
//! sensor origin in N·mm.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// A commanded pose increment; same six components as [`Pose`].
pub type PoseCorrection = Pose;

impl Pose {
    pub fn from_array(a: [f64; 6]) -> Self {
        Pose {
            x: a[0],
            y: a[1],
            z: a[2],
            alpha: a[3],
            beta: a[4],
            gamma: a[5],
        }
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.x, self.y, self.z, self.alpha, self.beta, self.gamma]
    }

    pub fn depth(&self) -> f64 {
        -self.z
    }

    /// Reflection through the X-Z plane.
    pub fn mirror_y(self) -> Self {
        Pose {
            y: -self.y,
            alpha: -self.alpha,
            gamma: -self.gamma,
            ..self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench {
    pub fx: f64,
    pub fy: f64,
    pub fz: f64,
    pub mx: f64,
    pub my: f64,
    pub mz: f64,
}

impl Wrench {
    pub fn from_array(a: [f64; 6]) -> Self {
        Wrench {
            fx: a[0],
            fy: a[1],
            fz: a[2],
            mx: a[3],
            my: a[4],
            mz: a[5],
        }
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.fx, self.fy, self.fz, self.mx, self.my, self.mz]
    }

    pub fn force_norm(&self) -> f64 {
        (self.fx * self.fx + self.fy * self.fy + self.fz * self.fz).sqrt()
    }

    pub fn moment_norm(&self) -> f64 {
        (self.mx * self.mx + self.my * self.my + self.mz * self.mz).sqrt()
    }

    pub fn mirror_y(self) -> Self {
        Wrench {
            fy: -self.fy,
            mx: -self.mx,
            mz: -self.mz,
            ..self
        }
    }
}

/// Diagonal admittance gains `[kx, ky, kz, kα, kβ, kγ]`; translational in
/// mm/N, rotational in rad/(N·m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplianceGains(pub [f64; 6]);

impl ComplianceGains {
    pub fn baseline() -> Self {
        ComplianceGains([8e-3, 8e-3, 8e-5, 2e-3, 2e-3, 2e-3])
    }
}

impl Default for ComplianceGains {
    fn default() -> Self {
        Self::baseline()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Geometry {
    pub peg_side: f64,
    pub hole_side: f64,
    pub peg_length: f64,
    pub hole_depth: f64,
    pub spacing_x: f64,
    pub spacing_y: f64,
    /// Penalty stiffness of one peg corner line engaged over the full peg
    /// length, N/mm; a partly engaged line is proportionally softer.
    pub contact_stiffness: f64,
    pub samples_per_edge: usize,
    /// Depth band below the hole top in which a misaligned peg tip is
    /// treated as resting on the hole rim.
    pub rim_band: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            peg_side: 9.9,
            hole_side: 10.0,
            peg_length: 30.0,
            hole_depth: 30.0,
            spacing_x: 50.0,
            spacing_y: 40.0,
            contact_stiffness: 130.0,
            samples_per_edge: 8,
            rim_band: 0.5,
        }
    }
}

impl Geometry {
    pub const PEG_COUNT: usize = 3;

    /// Peg (and hole) centres in the pattern frame: two pegs on the `-x`
    /// side separated in `y`, one on the `+x` side. Symmetric under `y → -y`.
    pub fn peg_centers(&self) -> [(f64, f64); Self::PEG_COUNT] {
        let hx = self.spacing_x / 2.0;
        let hy = self.spacing_y / 2.0;
        [(-hx, hy), (-hx, -hy), (hx, 0.0)]
    }

    pub fn clearance_per_side(&self) -> f64 {
        (self.hole_side - self.peg_side) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub h_z: f64,
    pub h_f: f64,
    pub h_m: f64,
    /// Force normalizer, N.
    pub force_norm: f64,
    /// Moment normalizer, N·mm.
    pub moment_norm: f64,
    pub success_bonus: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            h_z: 0.5,
            h_f: 0.1,
            h_m: 0.5,
            force_norm: 20.0,
            moment_norm: 200.0,
            success_bonus: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub geometry: Geometry,
    pub reward: RewardConfig,
    pub baseline_gains: ComplianceGains,
    /// Insertion depth at reset, mm.
    pub initial_depth: f64,
    /// Success depth, mm.
    pub target_depth: f64,
    /// Steps in which an unobstructed insertion reaches the target.
    pub target_steps: usize,
    pub max_steps: usize,
    /// Reference insertion force of the z channel, N.
    pub feed_force: f64,
    /// Per-step clamp on translational corrections, mm.
    pub max_translation_step: f64,
    /// Per-step clamp on rotational corrections, rad.
    pub max_rotation_step: f64,
    /// Converts moments (N·mm) into the units of the rotational gains (N·m).
    pub moment_gain_scale: f64,
    /// Bound on `a + a_n` before modulation.
    pub modulation_clamp: f64,
    pub jam_force: f64,
    pub jam_moment: f64,
    /// Minimum force magnitude at reset for contact to count as detected, N.
    pub detect_force: f64,
    pub reset_attempts: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            geometry: Geometry::default(),
            reward: RewardConfig::default(),
            baseline_gains: ComplianceGains::baseline(),
            initial_depth: 1.0,
            target_depth: 30.0,
            target_steps: 50,
            max_steps: 100,
            feed_force: 10.0,
            max_translation_step: 0.2,
            max_rotation_step: 0.2_f64.to_radians(),
            moment_gain_scale: 1e-3,
            modulation_clamp: 0.95,
            jam_force: 50.0,
            jam_moment: 500.0,
            detect_force: 0.5,
            reset_attempts: 100,
        }
    }
}

impl EnvConfig {
    /// Downward feed per step, mm.
    pub fn feed_per_step(&self) -> f64 {
        (self.target_depth - self.initial_depth) / self.target_steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        if g.hole_side <= g.peg_side {
            return Err(Error::Config("hole_side must exceed peg_side".into()));
        }
        if g.samples_per_edge == 0 || g.contact_stiffness <= 0.0 {
            return Err(Error::Config(
                "contact model needs samples and positive stiffness".into(),
            ));
        }
        if self.target_steps == 0 || self.max_steps < self.target_steps {
            return Err(Error::Config("max_steps must be >= target_steps > 0".into()));
        }
        if self.target_depth <= self.initial_depth || self.target_depth > g.hole_depth {
            return Err(Error::Config(
                "target depth must lie in (initial_depth, hole_depth]".into(),
            ));
        }
        if self.baseline_gains.0.iter().any(|&k| k <= 0.0) {
            return Err(Error::Config("baseline gains must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.modulation_clamp) {
            return Err(Error::Config("modulation_clamp must lie in [0, 1)".into()));
        }
        let r = &self.reward;
        if [r.h_z, r.h_f, r.h_m, r.success_bonus].iter().any(|&c| c < 0.0)
            || r.force_norm <= 0.0
            || r.moment_norm <= 0.0
        {
            return Err(Error::Config(
                "reward coefficients must be nonnegative, normalizers positive".into(),
            ));
        }
        Ok(())
    }
}

/// Half-widths of the uniform initial pose error; angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRange(pub [f64; 6]);

impl PoseRange {
    pub fn standard() -> Self {
        let r = 0.5_f64.to_radians();
        PoseRange([0.2, 0.2, 0.2, r, r, r])
    }

    pub fn zero() -> Self {
        PoseRange([0.0; 6])
    }
}

impl Default for PoseRange {
    fn default() -> Self {
        Self::standard()
    }
}

/// `K = diag(K̂ · (1 + clamp(a + a_n)))`.
pub fn modulate_gains(action: &[f64; 6], noise: &[f64; 6], baseline: &ComplianceGains, clamp: f64) -> ComplianceGains {
    let mut k = [0.0; 6];
    for i in 0..6 {
        let m = (action[i] + noise[i]).clamp(-clamp, clamp);
        k[i] = baseline.0[i] * (1.0 + m);
    }
    ComplianceGains(k)
}

/// Admittance law `p_c = K · A · (F − F_ref)` with per-step clamping.
///
/// `A` is diagonal: `+1` on force rows, `moment_gain_scale` on moment rows.
pub fn compliance_step(gains: &ComplianceGains, wrench: &Wrench, f_ref: &Wrench, cfg: &EnvConfig) -> PoseCorrection {
    let err = {
        let w = wrench.to_array();
        let r = f_ref.to_array();
        [
            w[0] - r[0],
            w[1] - r[1],
            w[2] - r[2],
            w[3] - r[3],
            w[4] - r[4],
            w[5] - r[5],
        ]
    };
    let mut out = [0.0; 6];
    for i in 0..6 {
        let (scale, limit) = if i < 3 {
            (1.0, cfg.max_translation_step)
        } else {
            (cfg.moment_gain_scale, cfg.max_rotation_step)
        };
        out[i] = (gains.0[i] * scale * err[i]).clamp(-limit, limit);
    }
    Pose::from_array(out)
}

/// Reference wrench of the z channel: regulate toward `feed_force` of
/// upward reaction, no lateral force or moment.
pub fn reference_wrench(cfg: &EnvConfig) -> Wrench {
    Wrench {
        fz: cfg.feed_force,
        ..Wrench::default()
    }
}

type Vec3 = [f64; 3];

fn rotation(alpha: f64, beta: f64, gamma: f64) -> [[f64; 3]; 3] {
    let (sa, ca) = alpha.sin_cos();
    let (sb, cb) = beta.sin_cos();
    let (sg, cg) = gamma.sin_cos();
    // Rz(γ) · Ry(β) · Rx(α)
    [
        [cg * cb, cg * sb * sa - sg * ca, cg * sb * ca + sg * sa],
        [sg * cb, sg * sb * sa + cg * ca, sg * sb * ca - cg * sa],
        [-sb, cb * sa, cb * ca],
    ]
}

fn transform(r: &[[f64; 3]; 3], t: &Vec3, p: &Vec3) -> Vec3 {
    [
        r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + t[0],
        r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + t[1],
        r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + t[2],
    ]
}

fn add_contact(w: &mut [f64; 6], arm: Vec3, f: Vec3) {
    w[0] += f[0];
    w[1] += f[1];
    w[2] += f[2];
    w[3] += arm[1] * f[2] - arm[2] * f[1];
    w[4] += arm[2] * f[0] - arm[0] * f[2];
    w[5] += arm[0] * f[1] - arm[1] * f[0];
}

/// Penalty-spring contact wrench on the peg group at `pose`.
///
/// Each peg's four vertical corner lines are sampled over their engaged
/// (below `z = 0`) length; a sample outside its hole's square cross
/// section is pushed back along each violated axis with stiffness
/// `contact_stiffness · engaged_fraction / samples_per_edge` per unit
/// penetration. A
/// misaligned tip within `rim_band` of the hole top also receives an
/// upward rim force.
pub fn contact_wrench(pose: &Pose, geom: &Geometry) -> Wrench {
    let r = rotation(pose.alpha, pose.beta, pose.gamma);
    let sensor = [pose.x, pose.y, pose.z + geom.peg_length];
    let half_peg = geom.peg_side / 2.0;
    let half_hole = geom.hole_side / 2.0;
    let n = geom.samples_per_edge;
    let mut w = [0.0; 6];

    for &(cx, cy) in &geom.peg_centers() {
        for &(sx, sy) in &[(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
            let px = cx + sx * half_peg;
            let py = cy + sy * half_peg;
            let tip = transform(&r, &sensor, &[px, py, -geom.peg_length]);
            if tip[2] >= 0.0 {
                continue;
            }
            let top = transform(&r, &sensor, &[px, py, 0.0]);
            let engaged = if top[2] < 0.0 { 1.0 } else { -tip[2] / (top[2] - tip[2]) };
            // Each sample stands for an equal share of the engaged length.
            let k_point = geom.contact_stiffness * engaged / n as f64;
            for k in 0..n {
                let s = engaged * (k as f64 + 0.5) / n as f64;
                let p = [
                    tip[0] + s * (top[0] - tip[0]),
                    tip[1] + s * (top[1] - tip[1]),
                    tip[2] + s * (top[2] - tip[2]),
                ];
                let u = p[0] - cx;
                let v = p[1] - cy;
                let ex = u.abs() - half_hole;
                let ey = v.abs() - half_hole;
                let mut f = [0.0; 3];
                if ex > 0.0 {
                    f[0] = -u.signum() * k_point * ex;
                }
                if ey > 0.0 {
                    f[1] = -v.signum() * k_point * ey;
                }
                if f[0] != 0.0 || f[1] != 0.0 {
                    let arm = [p[0] - sensor[0], p[1] - sensor[1], p[2] - sensor[2]];
                    add_contact(&mut w, arm, f);
                }
            }

            // Rim: a tip still within the entry band and laterally outside
            // the opening presses on the top surface.
            let tip_depth = -tip[2];
            if tip_depth < geom.rim_band {
                let excess = ((tip[0] - cx).abs() - half_hole).max((tip[1] - cy).abs() - half_hole);
                let pen = excess.min(tip_depth).min(geom.rim_band - tip_depth);
                if pen > 0.0 {
                    let arm = [tip[0] - sensor[0], tip[1] - sensor[1], tip[2] - sensor[2]];
                    add_contact(&mut w, arm, [0.0, 0.0, geom.contact_stiffness * pen]);
                }
            }
        }
    }
    Wrench::from_array(w)
}

/// `h_z·(Δdepth / feed) − h_f·‖f‖/F_norm − h_m·‖m‖/M_norm (+ bonus on success)`.
pub fn compute_reward(
    depth_increment: f64,
    nominal_step: f64,
    wrench: &Wrench,
    cfg: &RewardConfig,
    success: bool,
) -> f64 {
    let mut r = cfg.h_z * depth_increment / nominal_step
        - cfg.h_f * wrench.force_norm() / cfg.force_norm
        - cfg.h_m * wrench.moment_norm() / cfg.moment_norm;
    if success {
        r += cfg.success_bonus;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Running,
    Success,
    Jammed,
    Timeout,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Running => "running",
            Outcome::Success => "success",
            Outcome::Jammed => "jammed",
            Outcome::Timeout => "timeout",
        }
    }

    pub fn is_terminal(self) -> bool {
        self != Outcome::Running
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub observation: Vec<f64>,
    pub pose: Pose,
    pub wrench: Wrench,
    pub step_index: usize,
    pub done: Outcome,
}

/// One row of a trajectory dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub step: usize,
    pub pose: Pose,
    pub wrench: Wrench,
    pub reward: f64,
}

pub const TRAJECTORY_HEADER: [&str; 14] = [
    "step", "x", "y", "z", "alpha", "beta", "gamma", "fx", "fy", "fz", "mx", "my", "mz", "reward",
];

impl TrajectoryRow {
    pub fn fields(&self) -> Vec<String> {
        let mut out = vec![self.step.to_string()];
        out.extend(self.pose.to_array().iter().map(|v| v.to_string()));
        out.extend(self.wrench.to_array().iter().map(|v| v.to_string()));
        out.push(self.reward.to_string());
        out
    }
}

pub const OBSERVATION_DIM: usize = 7;

pub struct AssemblyEnv {
    cfg: EnvConfig,
    f_ref: Wrench,
    state: EnvState,
}

impl AssemblyEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let f_ref = reference_wrench(&cfg);
        let pose = Pose {
            z: -cfg.initial_depth,
            ..Pose::default()
        };
        let wrench = contact_wrench(&pose, &cfg.geometry);
        let state = EnvState {
            observation: observe(&cfg, &pose, &wrench),
            pose,
            wrench,
            step_index: 0,
            done: Outcome::Running,
        };
        Ok(AssemblyEnv { cfg, f_ref, state })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    /// Places the pegs at the initial depth with a uniformly random pose
    /// error, redrawing until the contact force is detectable and below
    /// the jam bounds.
    pub fn reset(&mut self, seed: u64, range: &PoseRange) -> Result<&EnvState> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..self.cfg.reset_attempts {
            let mut e = [0.0; 6];
            for (ei, &half) in e.iter_mut().zip(&range.0) {
                *ei = if half > 0.0 {
                    rng.random_range(-half..=half)
                } else {
                    0.0
                };
            }
            let pose = self.initial_pose(&e);
            let wrench = contact_wrench(&pose, &self.cfg.geometry);
            if wrench.force_norm() > self.cfg.detect_force && !self.is_jammed(&wrench) {
                self.set_state(pose, wrench);
                return Ok(&self.state);
            }
        }
        Err(Error::ResetFailed(self.cfg.reset_attempts))
    }

    /// Places the pegs at the initial depth offset by an explicit error
    /// `[x, y, z, α, β, γ]`, without any detectability check.
    pub fn reset_to_error(&mut self, error: &[f64; 6]) -> &EnvState {
        let pose = self.initial_pose(error);
        let wrench = contact_wrench(&pose, &self.cfg.geometry);
        self.set_state(pose, wrench);
        &self.state
    }

    fn initial_pose(&self, e: &[f64; 6]) -> Pose {
        Pose {
            x: e[0],
            y: e[1],
            z: -self.cfg.initial_depth + e[2],
            alpha: e[3],
            beta: e[4],
            gamma: e[5],
        }
    }

    fn set_state(&mut self, pose: Pose, wrench: Wrench) {
        self.state = EnvState {
            observation: observe(&self.cfg, &pose, &wrench),
            pose,
            wrench,
            step_index: 0,
            done: Outcome::Running,
        };
    }

    fn is_jammed(&self, w: &Wrench) -> bool {
        w.force_norm() > self.cfg.jam_force || w.moment_norm() > self.cfg.jam_moment
    }

    /// Advances one control period with the given gains; returns the reward.
    pub fn step(&mut self, gains: &ComplianceGains) -> Result<f64> {
        if self.state.done.is_terminal() {
            return Err(Error::EpisodeFinished);
        }
        let correction = compliance_step(gains, &self.state.wrench, &self.f_ref, &self.cfg);
        let feed = self.cfg.feed_per_step();
        let old = self.state.pose;
        let pose = Pose {
            x: old.x + correction.x,
            y: old.y + correction.y,
            z: old.z + correction.z - feed,
            alpha: old.alpha + correction.alpha,
            beta: old.beta + correction.beta,
            gamma: old.gamma + correction.gamma,
        };
        let wrench = contact_wrench(&pose, &self.cfg.geometry);
        let step_index = self.state.step_index + 1;

        let angle_limit = std::f64::consts::FRAC_PI_2;
        let angles_ok = [pose.alpha, pose.beta, pose.gamma]
            .iter()
            .all(|a| a.abs() < angle_limit);
        // Tolerance absorbs accumulated rounding in the feed sum.
        let done = if pose.depth() >= self.cfg.target_depth - 1e-9 {
            Outcome::Success
        } else if !angles_ok || self.is_jammed(&wrench) || !wrench.force_norm().is_finite() {
            Outcome::Jammed
        } else if step_index >= self.cfg.max_steps {
            Outcome::Timeout
        } else {
            Outcome::Running
        };
        let reward = compute_reward(
            pose.depth() - old.depth(),
            feed,
            &wrench,
            &self.cfg.reward,
            done == Outcome::Success,
        );
        self.state = EnvState {
            observation: observe(&self.cfg, &pose, &wrench),
            pose,
            wrench,
            step_index,
            done,
        };
        Ok(reward)
    }
}

fn observe(cfg: &EnvConfig, pose: &Pose, w: &Wrench) -> Vec<f64> {
    let mut obs = Vec::with_capacity(OBSERVATION_DIM);
    for (i, v) in w.to_array().iter().enumerate() {
        let norm = if i < 3 { cfg.jam_force } else { cfg.jam_moment };
        obs.push((v / norm).clamp(-1.0, 1.0));
    }
    obs.push((pose.depth() / cfg.target_depth).clamp(-1.0, 1.0));
    obs
}
