//! Built-in riding protocol used to generate classifier training data: six
//! dressage tasks plus jumping, ridden by simulated horses that differ in
//! stride, swing and impact characteristics.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gait::Gait;
use super::script::{HorseProfile, Script, ScriptStep, SimConfig};

pub const TASKS: [&str; 6] = [
    "halt_salute",
    "free_walk",
    "working_trot",
    "trot_circle",
    "half_pass",
    "working_canter",
];

/// The task that is deliberately hard to tell apart from its neighbours.
pub const CONFUSABLE_TASK: &str = "half_pass";

/// Relative ride-to-ride spread of a horse's stride, swing, impact and
/// trunk coupling.
pub const RIDE_JITTER: f64 = 0.05;
/// Scale of the sideways limb rotation rate in lateral work, dps.
pub const CROSSING_DPS: f64 = 12.0;
/// Upper bound of the leg aid amplitude in lateral work, g.
pub const LEG_AID_G: f64 = 0.06;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Horse {
    A,
    B,
    C,
}

impl Horse {
    pub fn profile(self) -> HorseProfile {
        let (stride_scale, swing_scale, impact_scale, duty_shift, trunk_gain) = match self {
            Horse::A => (0.95, 0.90, 0.90, 0.02, 0.9),
            Horse::B => (1.07, 1.12, 1.15, -0.02, 1.1),
            Horse::C => (1.01, 1.00, 1.05, 0.0, 1.0),
        };
        HorseProfile {
            stride_scale,
            swing_scale,
            impact_scale,
            duty_shift,
            trunk_gain,
        }
    }
}

fn task_steps(task: &str, duration_s: f64, rng: &mut ChaCha8Rng) -> Vec<ScriptStep> {
    let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let mut steps = match task {
        "halt_salute" => {
            let mut s = ScriptStep::new(duration_s, Gait::Halt);
            s.rider_gain = 1.5;
            vec![s]
        }
        "free_walk" => vec![ScriptStep::new(duration_s, Gait::Walk)],
        "working_trot" => vec![ScriptStep::new(duration_s, Gait::Trot)],
        "trot_circle" => {
            let mut s = ScriptStep::new(duration_s, Gait::Trot);
            s.lateral_g = side * rng.random_range(0.12..0.2);
            s.asymmetry = side * 0.04;
            s.crossing_dps = side * rng.random_range(0.0..CROSSING_DPS);
            s.leg_aid_g = side * rng.random_range(0.5 * LEG_AID_G..LEG_AID_G);
            vec![s]
        }
        "half_pass" => half_pass(duration_s, side, rng),
        "working_canter" => vec![ScriptStep::new(duration_s, Gait::Canter)],
        other => panic!("unknown protocol task {other}"),
    };
    for s in &mut steps {
        s.task = Some(task.to_string());
    }
    steps
}

/// Sideways segments (lateral load, crossing legs, leg aid) separated by a
/// few straight strides, which look like a working trot.
fn half_pass(duration_s: f64, side: f64, rng: &mut ChaCha8Rng) -> Vec<ScriptStep> {
    let mut steps = Vec::new();
    let mut left = duration_s;
    let mut sideways = true;
    while left > 1e-9 {
        let d = if sideways { rng.random_range(3.0..6.0_f64) } else { rng.random_range(5.0..10.0_f64) };
        let d = d.round().min(left);
        let mut s = ScriptStep::new(d, Gait::Trot);
        if sideways {
            s.lateral_g = side * rng.random_range(0.1..0.18);
            s.crossing_dps = side * rng.random_range(0.25 * CROSSING_DPS..1.25 * CROSSING_DPS);
            s.asymmetry = side * 0.03;
            s.leg_aid_g = side * rng.random_range(0.5 * LEG_AID_G..LEG_AID_G);
        }
        steps.push(s);
        left -= d;
        sideways = !sideways;
    }
    steps
}

/// One ride of the protocol: each task twice in shuffled order with
/// randomized durations, and two jumping blocks. Deterministic in `seed`.
pub fn protocol_script(horse: Horse, seed: u64) -> Script {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks: Vec<Option<&str>> = TASKS.iter().chain(TASKS.iter()).map(|t| Some(*t)).collect();
    blocks.push(None);
    blocks.push(None);
    blocks.shuffle(&mut rng);
    let mut steps = task_steps("halt_salute", 6.0, &mut rng);
    for b in blocks {
        let d = rng.random_range(22.0..34.0_f64).round();
        match b {
            Some(task) => steps.extend(task_steps(task, d, &mut rng)),
            None => {
                let mut s = ScriptStep::new(d, Gait::Jump);
                s.jump_interval_s = Some(4.0);
                steps.push(s);
            }
        }
    }
    let mut profile = horse.profile();
    // day-to-day variation of the same horse
    for v in [
        &mut profile.stride_scale,
        &mut profile.swing_scale,
        &mut profile.impact_scale,
        &mut profile.trunk_gain,
    ] {
        *v *= 1.0 + rng.random_range(-RIDE_JITTER..RIDE_JITTER);
    }
    let mut config = SimConfig {
        horse: profile,
        ..SimConfig::default()
    };
    config.noise_accel_g = 0.03;
    config.noise_gyro_dps = 1.0;
    Script { steps, config }
}
