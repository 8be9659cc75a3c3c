//! The classic control tasks with their widely published constants and
//! update rules.

use std::f64::consts::PI;

use rand::Rng as _;

use super::{Action, ActionSpace, EnvSpec, Environment, EpisodeClock, StepResult};
use crate::error::Result;
use crate::rng::{rng_from, stream};

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// Wraps an angle into `[-π, π)`.
pub(crate) fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

/// Cart-pole balancing. Constants: gravity 9.8, cart mass 1.0, pole mass
/// 0.1, pole half-length 0.5, force ±10 N, explicit Euler with τ = 0.02 s.
/// Fails beyond |x| > 2.4 m or |θ| > 12°. Reward +1 per step; default step
/// limit 1000. State `(x, v, θ, ω)`; actions `0` (push left) and `1` (right).
#[derive(Debug, Clone)]
pub struct CartPole {
    spec: EnvSpec,
    state: [f64; 4],
    clock: EpisodeClock,
}

impl CartPole {
    pub const GRAVITY: f64 = 9.8;
    pub const MASS_CART: f64 = 1.0;
    pub const MASS_POLE: f64 = 0.1;
    pub const HALF_LENGTH: f64 = 0.5;
    pub const FORCE: f64 = 10.0;
    pub const TAU: f64 = 0.02;
    pub const X_LIMIT: f64 = 2.4;
    pub const THETA_LIMIT: f64 = 12.0 * 2.0 * PI / 360.0;

    pub fn new() -> Self {
        let spec = EnvSpec {
            name: "cartpole".into(),
            state_dim: 4,
            action_space: ActionSpace::Discrete(2),
            max_episode_steps: 1000,
            feature_names: names(&["x", "v", "theta", "omega"]),
            feature_ranges: vec![(-Self::X_LIMIT, Self::X_LIMIT), (-3.0, 3.0), (-Self::THETA_LIMIT, Self::THETA_LIMIT), (-3.5, 3.5)],
            angle_features: vec![2],
        };
        spec.validate();
        Self {
            clock: EpisodeClock::new(spec.max_episode_steps),
            spec,
            state: [0.0; 4],
        }
    }

    /// Overwrites the physical state and starts a fresh episode clock.
    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
        self.clock.start();
    }
}

impl Default for CartPole {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for CartPole {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed, stream::INIT);
        for s in &mut self.state {
            *s = rng.random_range(-0.05..0.05);
        }
        self.clock.start();
        self.state.to_vec()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        self.spec.action_space.check(action)?;
        self.clock.tick(&self.spec.name)?;
        let force = match action {
            Action::Discrete(1) => Self::FORCE,
            _ => -Self::FORCE,
        };
        let [x, v, theta, omega] = self.state;
        let total_mass = Self::MASS_CART + Self::MASS_POLE;
        let pole_mass_length = Self::MASS_POLE * Self::HALF_LENGTH;
        let (sin, cos) = (libm::sin(theta), libm::cos(theta));
        let temp = (force + pole_mass_length * omega * omega * sin) / total_mass;
        let theta_acc = (Self::GRAVITY * sin - cos * temp)
            / (Self::HALF_LENGTH * (4.0 / 3.0 - Self::MASS_POLE * cos * cos / total_mass));
        let x_acc = temp - pole_mass_length * theta_acc * cos / total_mass;
        self.state = [
            x + Self::TAU * v,
            v + Self::TAU * x_acc,
            theta + Self::TAU * omega,
            omega + Self::TAU * theta_acc,
        ];
        let terminated = self.state[0].abs() > Self::X_LIMIT || self.state[2].abs() > Self::THETA_LIMIT;
        Ok(self.clock.result(self.state.to_vec(), 1.0, terminated))
    }

    fn set_max_episode_steps(&mut self, steps: usize) {
        self.spec.max_episode_steps = steps;
        self.clock.limit = steps;
    }
}

/// Torque-controlled pendulum swing-up. g = 10, m = 1, l = 1, dt = 0.05,
/// |ω| ≤ 8, |u| ≤ 2. θ = 0 is upright. Reward −(θ² + 0.1ω² + 0.001u²)
/// evaluated before the update; 200 steps per episode.
/// Observation `(θ, ω)` with θ wrapped into `[-π, π)`.
#[derive(Debug, Clone)]
pub struct Pendulum {
    spec: EnvSpec,
    theta: f64,
    omega: f64,
    clock: EpisodeClock,
}

impl Pendulum {
    pub const GRAVITY: f64 = 10.0;
    pub const MASS: f64 = 1.0;
    pub const LENGTH: f64 = 1.0;
    pub const DT: f64 = 0.05;
    pub const MAX_SPEED: f64 = 8.0;
    pub const MAX_TORQUE: f64 = 2.0;

    pub fn new() -> Self {
        let spec = EnvSpec {
            name: "pendulum".into(),
            state_dim: 2,
            action_space: ActionSpace::Continuous {
                low: -Self::MAX_TORQUE,
                high: Self::MAX_TORQUE,
                dim: 1,
            },
            max_episode_steps: 200,
            feature_names: names(&["theta", "omega"]),
            feature_ranges: vec![(-PI, PI), (-Self::MAX_SPEED, Self::MAX_SPEED)],
            angle_features: vec![0],
        };
        spec.validate();
        Self {
            clock: EpisodeClock::new(spec.max_episode_steps),
            spec,
            theta: 0.0,
            omega: 0.0,
        }
    }

    pub fn set_state(&mut self, theta: f64, omega: f64) {
        self.theta = wrap_angle(theta);
        self.omega = omega;
        self.clock.start();
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for Pendulum {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed, stream::INIT);
        self.theta = rng.random_range(-PI..PI);
        self.omega = rng.random_range(-1.0..1.0);
        self.clock.start();
        vec![self.theta, self.omega]
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        self.spec.action_space.check(action)?;
        self.clock.tick(&self.spec.name)?;
        let u = match action {
            Action::Continuous(u) => u[0],
            Action::Discrete(_) => unreachable!("checked against action space"),
        };
        let cost = self.theta * self.theta + 0.1 * self.omega * self.omega + 0.001 * u * u;
        let (g, m, l, dt) = (Self::GRAVITY, Self::MASS, Self::LENGTH, Self::DT);
        let omega = (self.omega + (3.0 * g / (2.0 * l) * libm::sin(self.theta) + 3.0 / (m * l * l) * u) * dt)
            .clamp(-Self::MAX_SPEED, Self::MAX_SPEED);
        self.theta = wrap_angle(self.theta + omega * dt);
        self.omega = omega;
        Ok(self.clock.result(vec![self.theta, self.omega], -cost, false))
    }

    fn set_max_episode_steps(&mut self, steps: usize) {
        self.spec.max_episode_steps = steps;
        self.clock.limit = steps;
    }
}

const MC_MIN_X: f64 = -1.2;
const MC_MAX_X: f64 = 0.6;
const MC_MAX_SPEED: f64 = 0.07;
const MC_GRAVITY: f64 = 0.0025;

fn mountain_car_update(x: f64, v: f64, accel: f64) -> (f64, f64) {
    let mut v = (v + accel - MC_GRAVITY * libm::cos(3.0 * x)).clamp(-MC_MAX_SPEED, MC_MAX_SPEED);
    let x = (x + v).clamp(MC_MIN_X, MC_MAX_X);
    if x == MC_MIN_X && v < 0.0 {
        v = 0.0;
    }
    (x, v)
}

fn mountain_car_spec(name: &str, action_space: ActionSpace, steps: usize) -> EnvSpec {
    let spec = EnvSpec {
        name: name.into(),
        state_dim: 2,
        action_space,
        max_episode_steps: steps,
        feature_names: names(&["x", "v"]),
        feature_ranges: vec![(MC_MIN_X, MC_MAX_X), (-MC_MAX_SPEED, MC_MAX_SPEED)],
        angle_features: vec![],
    };
    spec.validate();
    spec
}

/// Discrete mountain car: actions push left / none / right with force
/// 0.001, gravity term −0.0025·cos(3x). Goal x ≥ 0.5. Reward −1 per step,
/// 200 steps per episode. Start x ~ U(−0.6, −0.4), v = 0.
#[derive(Debug, Clone)]
pub struct MountainCar {
    spec: EnvSpec,
    x: f64,
    v: f64,
    clock: EpisodeClock,
}

impl MountainCar {
    pub const FORCE: f64 = 0.001;
    pub const GOAL_X: f64 = 0.5;

    pub fn new() -> Self {
        let spec = mountain_car_spec("mountaincar", ActionSpace::Discrete(3), 200);
        Self {
            clock: EpisodeClock::new(spec.max_episode_steps),
            spec,
            x: -0.5,
            v: 0.0,
        }
    }

    pub fn set_state(&mut self, x: f64, v: f64) {
        self.x = x;
        self.v = v;
        self.clock.start();
    }
}

impl Default for MountainCar {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for MountainCar {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed, stream::INIT);
        self.x = rng.random_range(-0.6..-0.4);
        self.v = 0.0;
        self.clock.start();
        vec![self.x, self.v]
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        self.spec.action_space.check(action)?;
        self.clock.tick(&self.spec.name)?;
        let a = match action {
            Action::Discrete(a) => *a as f64,
            Action::Continuous(_) => unreachable!("checked against action space"),
        };
        (self.x, self.v) = mountain_car_update(self.x, self.v, (a - 1.0) * Self::FORCE);
        let terminated = self.x >= Self::GOAL_X && self.v >= 0.0;
        Ok(self.clock.result(vec![self.x, self.v], -1.0, terminated))
    }

    fn set_max_episode_steps(&mut self, steps: usize) {
        self.spec.max_episode_steps = steps;
        self.clock.limit = steps;
    }
}

/// Continuous mountain car: force u ∈ [−1, 1] scaled by 0.0015. Goal
/// x ≥ 0.45 pays +100; each step costs 0.1·u². 999 steps per episode.
#[derive(Debug, Clone)]
pub struct MountainCarContinuous {
    spec: EnvSpec,
    x: f64,
    v: f64,
    clock: EpisodeClock,
}

impl MountainCarContinuous {
    pub const POWER: f64 = 0.0015;
    pub const GOAL_X: f64 = 0.45;

    pub fn new() -> Self {
        let spec = mountain_car_spec(
            "mountaincar-cont",
            ActionSpace::Continuous {
                low: -1.0,
                high: 1.0,
                dim: 1,
            },
            999,
        );
        Self {
            clock: EpisodeClock::new(spec.max_episode_steps),
            spec,
            x: -0.5,
            v: 0.0,
        }
    }

    pub fn set_state(&mut self, x: f64, v: f64) {
        self.x = x;
        self.v = v;
        self.clock.start();
    }
}

impl Default for MountainCarContinuous {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for MountainCarContinuous {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed, stream::INIT);
        self.x = rng.random_range(-0.6..-0.4);
        self.v = 0.0;
        self.clock.start();
        vec![self.x, self.v]
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        self.spec.action_space.check(action)?;
        self.clock.tick(&self.spec.name)?;
        let u = match action {
            Action::Continuous(u) => u[0],
            Action::Discrete(_) => unreachable!("checked against action space"),
        };
        (self.x, self.v) = mountain_car_update(self.x, self.v, u * Self::POWER);
        let terminated = self.x >= Self::GOAL_X && self.v >= 0.0;
        let reward = if terminated { 100.0 } else { 0.0 } - 0.1 * u * u;
        Ok(self.clock.result(vec![self.x, self.v], reward, terminated))
    }

    fn set_max_episode_steps(&mut self, steps: usize) {
        self.spec.max_episode_steps = steps;
        self.clock.limit = steps;
    }
}

/// Two-link acrobot with torque {−1, 0, +1} on the second joint. Links of
/// length 1 and mass 1, centres of mass at 0.5, moments of inertia 1,
/// g = 9.8, dt = 0.2 with one RK4 step. |ω₁| ≤ 4π, |ω₂| ≤ 9π. Goal when
/// −cos θ₁ − cos(θ₁ + θ₂) > 1. Reward −1 per non-terminal step; 500 steps.
/// State `(θ₁, θ₂, ω₁, ω₂)`.
#[derive(Debug, Clone)]
pub struct Acrobot {
    spec: EnvSpec,
    state: [f64; 4],
    clock: EpisodeClock,
}

impl Acrobot {
    pub const DT: f64 = 0.2;
    pub const LINK_LENGTH_1: f64 = 1.0;
    pub const LINK_MASS_1: f64 = 1.0;
    pub const LINK_MASS_2: f64 = 1.0;
    pub const LINK_COM_1: f64 = 0.5;
    pub const LINK_COM_2: f64 = 0.5;
    pub const LINK_MOI: f64 = 1.0;
    pub const GRAVITY: f64 = 9.8;
    pub const MAX_VEL_1: f64 = 4.0 * PI;
    pub const MAX_VEL_2: f64 = 9.0 * PI;
    pub const TORQUES: [f64; 3] = [-1.0, 0.0, 1.0];

    pub fn new() -> Self {
        let spec = EnvSpec {
            name: "acrobot".into(),
            state_dim: 4,
            action_space: ActionSpace::Discrete(3),
            max_episode_steps: 500,
            feature_names: names(&["theta1", "theta2", "omega1", "omega2"]),
            feature_ranges: vec![(-PI, PI), (-PI, PI), (-Self::MAX_VEL_1, Self::MAX_VEL_1), (-Self::MAX_VEL_2, Self::MAX_VEL_2)],
            angle_features: vec![0, 1],
        };
        spec.validate();
        Self {
            clock: EpisodeClock::new(spec.max_episode_steps),
            spec,
            state: [0.0; 4],
        }
    }

    pub fn set_state(&mut self, state: [f64; 4]) {
        self.state = state;
        self.clock.start();
    }

    fn derivatives(s: [f64; 4], torque: f64) -> [f64; 4] {
        let (m1, m2) = (Self::LINK_MASS_1, Self::LINK_MASS_2);
        let l1 = Self::LINK_LENGTH_1;
        let (lc1, lc2) = (Self::LINK_COM_1, Self::LINK_COM_2);
        let (i1, i2) = (Self::LINK_MOI, Self::LINK_MOI);
        let g = Self::GRAVITY;
        let [theta1, theta2, dtheta1, dtheta2] = s;
        let d1 = m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * libm::cos(theta2)) + i1 + i2;
        let d2 = m2 * (lc2 * lc2 + l1 * lc2 * libm::cos(theta2)) + i2;
        let phi2 = m2 * lc2 * g * libm::cos(theta1 + theta2 - PI / 2.0);
        let phi1 = -m2 * l1 * lc2 * dtheta2 * dtheta2 * libm::sin(theta2)
            - 2.0 * m2 * l1 * lc2 * dtheta2 * dtheta1 * libm::sin(theta2)
            + (m1 * lc1 + m2 * l1) * g * libm::cos(theta1 - PI / 2.0)
            + phi2;
        let ddtheta2 = (torque + d2 / d1 * phi1 - m2 * l1 * lc2 * dtheta1 * dtheta1 * libm::sin(theta2) - phi2)
            / (m2 * lc2 * lc2 + i2 - d2 * d2 / d1);
        let ddtheta1 = -(d2 * ddtheta2 + phi1) / d1;
        [dtheta1, dtheta2, ddtheta1, ddtheta2]
    }

    fn rk4(s: [f64; 4], torque: f64, h: f64) -> [f64; 4] {
        let add = |a: [f64; 4], b: [f64; 4], k: f64| [a[0] + k * b[0], a[1] + k * b[1], a[2] + k * b[2], a[3] + k * b[3]];
        let k1 = Self::derivatives(s, torque);
        let k2 = Self::derivatives(add(s, k1, h / 2.0), torque);
        let k3 = Self::derivatives(add(s, k2, h / 2.0), torque);
        let k4 = Self::derivatives(add(s, k3, h), torque);
        let mut out = s;
        for i in 0..4 {
            out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }
}

impl Default for Acrobot {
    fn default() -> Self {
        Self::new()
    }
}

impl Environment for Acrobot {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = rng_from(seed, stream::INIT);
        for s in &mut self.state {
            *s = rng.random_range(-0.1..0.1);
        }
        self.clock.start();
        self.state.to_vec()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        self.spec.action_space.check(action)?;
        self.clock.tick(&self.spec.name)?;
        let torque = match action {
            Action::Discrete(a) => Self::TORQUES[*a],
            Action::Continuous(_) => unreachable!("checked against action space"),
        };
        let mut s = Self::rk4(self.state, torque, Self::DT);
        s[0] = wrap_angle(s[0]);
        s[1] = wrap_angle(s[1]);
        s[2] = s[2].clamp(-Self::MAX_VEL_1, Self::MAX_VEL_1);
        s[3] = s[3].clamp(-Self::MAX_VEL_2, Self::MAX_VEL_2);
        self.state = s;
        let terminated = -libm::cos(s[0]) - libm::cos(s[1] + s[0]) > 1.0;
        let reward = if terminated { 0.0 } else { -1.0 };
        Ok(self.clock.result(s.to_vec(), reward, terminated))
    }

    fn set_max_episode_steps(&mut self, steps: usize) {
        self.spec.max_episode_steps = steps;
        self.clock.limit = steps;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn angular_distance(a: f64, b: f64) -> f64 {
        wrap_angle(a - b).abs()
    }

    #[test]
    fn cartpole_reset_range_and_determinism() {
        let mut env = CartPole::new();
        for seed in 0..50 {
            let s = env.reset(seed);
            assert!(s.iter().all(|v| v.abs() <= 0.05));
        }
        assert_eq!(env.reset(7), env.reset(7));
        assert_ne!(env.reset(7), env.reset(8));
    }

    #[test]
    fn cartpole_left_and_right_are_mirror_images() {
        let mut left = CartPole::new();
        let mut right = CartPole::new();
        left.set_state([0.0; 4]);
        right.set_state([0.0; 4]);
        for _ in 0..20 {
            let l = left.step(&Action::Discrete(0)).unwrap();
            let r = right.step(&Action::Discrete(1)).unwrap();
            for (a, b) in l.next_state.iter().zip(&r.next_state) {
                assert_eq!(*a, -*b);
            }
            assert_eq!(l.done, r.done);
            if l.done {
                break;
            }
        }
    }

    #[test]
    fn cartpole_one_step_by_hand() {
        let mut env = CartPole::new();
        env.set_state([0.0; 4]);
        let r = env.step(&Action::Discrete(1)).unwrap();
        // θ = 0: temp = 10/1.1, θ̈ = -temp / (0.5 (4/3 - 0.1/1.1)), ẍ = temp - 0.05 θ̈ / 1.1
        let temp = 10.0 / 1.1;
        let theta_acc = -temp / (0.5 * (4.0 / 3.0 - 0.1 / 1.1));
        let x_acc = temp - 0.05 * theta_acc / 1.1;
        let expected = [0.0, 0.02 * x_acc, 0.0, 0.02 * theta_acc];
        for (a, b) in r.next_state.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(r.reward, 1.0);
    }

    #[test]
    fn cartpole_invalid_action() {
        let mut env = CartPole::new();
        env.reset(0);
        assert!(env.step(&Action::Discrete(2)).is_err());
        assert!(env.step(&Action::Continuous(vec![0.0])).is_err());
    }

    #[test]
    fn pendulum_hanging_down_is_an_equilibrium() {
        let mut env = Pendulum::new();
        env.set_state(PI, 0.0);
        for _ in 0..10 {
            let r = env.step(&Action::Continuous(vec![0.0])).unwrap();
            assert!(angular_distance(r.next_state[0], PI) < 1e-12);
            assert!(r.next_state[1].abs() < 1e-12);
        }
    }

    #[test]
    fn pendulum_reward_and_bounds() {
        let mut env = Pendulum::new();
        env.set_state(0.5, -1.0);
        let r = env.step(&Action::Continuous(vec![2.0])).unwrap();
        assert!((r.reward + (0.25 + 0.1 + 0.004)).abs() < 1e-15);
        assert!(env.step(&Action::Continuous(vec![2.5])).is_err());
    }

    #[test]
    fn mountain_car_zero_gravity_point() {
        let x = -PI / 6.0; // cos(3x) = 0
        let mut env = MountainCar::new();
        env.set_state(x, 0.0);
        let r = env.step(&Action::Discrete(1)).unwrap();
        assert!(r.next_state[1].abs() < 1e-15);
        assert!((r.next_state[0] - x).abs() < 1e-15);

        let mut cont = MountainCarContinuous::new();
        cont.set_state(x, 0.0);
        let r = cont.step(&Action::Continuous(vec![0.0])).unwrap();
        assert!(r.next_state[1].abs() < 1e-15);
        assert_eq!(r.reward, 0.0);
    }

    #[test]
    fn mountain_car_continuous_goal_bonus() {
        let mut env = MountainCarContinuous::new();
        env.set_state(0.449, 0.05);
        let r = env.step(&Action::Continuous(vec![1.0])).unwrap();
        assert!(r.done && !r.truncated);
        assert!((r.reward - (100.0 - 0.1)).abs() < 1e-12);
    }

    #[test]
    fn acrobot_rest_is_equilibrium_and_goal_terminates() {
        let mut env = Acrobot::new();
        env.set_state([0.0; 4]);
        let r = env.step(&Action::Discrete(1)).unwrap();
        assert!(r.next_state.iter().all(|v| v.abs() < 1e-12));
        assert_eq!(r.reward, -1.0);

        // Second link swung up past the goal line.
        env.set_state([PI, 0.0, 0.0, 0.0]);
        let r = env.step(&Action::Discrete(1)).unwrap();
        assert!(r.done && !r.truncated);
        assert_eq!(r.reward, 0.0);
    }

    #[test]
    fn acrobot_velocity_limits_hold() {
        let mut env = Acrobot::new();
        env.reset(1);
        for t in 0..500 {
            let r = env.step(&Action::Discrete(if (t / 10) % 2 == 0 { 0 } else { 2 })).unwrap();
            assert!(r.next_state[2].abs() <= Acrobot::MAX_VEL_1 && r.next_state[3].abs() <= Acrobot::MAX_VEL_2);
            assert!(r.next_state[0] >= -PI && r.next_state[0] < PI);
            if r.done {
                break;
            }
        }
    }
}
