//! Parametric grid worlds with uncertain slipping.
//!
//! The agent moves north, east, south or west. With a probability in the
//! slip interval it moves two cells instead of one; movement past a wall is
//! truncated, so next to a wall both outcomes may coincide and the move is
//! deterministic. Every step costs `step_cost`; states flagged bad add
//! `penalty_cost`.
//!
//! * `evade`: reach the far corner while an adversary chases the agent. The
//!   adversary steps towards the agent along the axis of larger distance
//!   and may not enter the 2x2 safe corner at the origin. A fifth action
//!   scans, revealing the adversary on the next observation. Sharing a cell
//!   with the adversary is bad.
//! * `intercept`: meet a target that enters in column 0, walks right and
//!   then to the nearer exit `(W-1, 0)` or `(W-1, H-1)` and leaves. Meeting
//!   it is the goal; once it has left, every step is bad until the agent
//!   itself reaches an exit.
//! * `avoid`: reach the far corner while an adversary patrols the inner ring
//!   clockwise; being within Manhattan distance 1 of it is bad.
//!
//! Observations reveal the agent's cell and the other robot's cell when it
//! is within `view_radius` (Chebyshev distance); otherwise the other robot
//! is hidden. The seed selects the agent's start cell.

use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Interval, PomdpBuilder, RobustPomdp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Evade,
    Intercept,
    Avoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub kind: GridKind,
    pub view_radius: usize,
    pub slip: Interval,
    pub step_cost: f64,
    pub penalty_cost: f64,
}

impl GridSpec {
    pub fn new(kind: GridKind) -> Self {
        GridSpec {
            width: 5,
            height: 5,
            kind,
            view_radius: 1,
            slip: Interval::new(0.1, 0.4),
            step_cost: 1.0,
            penalty_cost: 100.0,
        }
    }

    pub fn with_size(mut self, width: usize, height: usize) -> Self {
        self.width = width;
        self.height = height;
        self
    }

    pub fn check(&self) -> Result<()> {
        if self.width < 3 || self.height < 3 {
            return Err(Error::InvalidArgument("grid must be at least 3x3".into()));
        }
        let s = self.slip;
        if !(s.lo > 0.0 && s.lo <= s.hi && s.hi < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "slip interval {s} must lie inside (0, 1)"
            )));
        }
        if !(self.step_cost >= 0.0 && self.penalty_cost >= 0.0) {
            return Err(Error::InvalidArgument("costs must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    fn cell(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    fn xy(&self, c: usize) -> (usize, usize) {
        (c % self.width, c / self.width)
    }

    /// Moves `k` cells in direction `dir` (0 north, 1 east, 2 south, 3 west),
    /// stopping at walls.
    fn shift(&self, c: usize, dir: usize, k: usize) -> usize {
        let (x, y) = self.xy(c);
        let (x, y) = match dir {
            0 => (x, y.saturating_sub(k)),
            1 => ((x + k).min(self.width - 1), y),
            2 => (x, (y + k).min(self.height - 1)),
            _ => (x.saturating_sub(k), y),
        };
        self.cell(x, y)
    }

    /// Agent outcomes of a move.
    fn move_outcomes(&self, c: usize, dir: usize) -> Vec<(usize, Interval)> {
        let one = self.shift(c, dir, 1);
        let two = self.shift(c, dir, 2);
        if one == two {
            vec![(one, Interval::point(1.0))]
        } else {
            vec![
                (one, Interval::new(1.0 - self.slip.hi, 1.0 - self.slip.lo)),
                (two, self.slip),
            ]
        }
    }

    fn chebyshev(&self, a: usize, b: usize) -> usize {
        let (ax, ay) = self.xy(a);
        let (bx, by) = self.xy(b);
        ax.abs_diff(bx).max(ay.abs_diff(by))
    }

    fn manhattan(&self, a: usize, b: usize) -> usize {
        let (ax, ay) = self.xy(a);
        let (bx, by) = self.xy(b);
        ax.abs_diff(bx) + ay.abs_diff(by)
    }

    /// Clockwise loop around the rectangle `[1, W-2] x [1, H-2]`.
    fn inner_ring(&self) -> Vec<usize> {
        let (x0, y0, x1, y1) = (1, 1, self.width - 2, self.height - 2);
        if x0 == x1 || y0 == y1 {
            let mut v = Vec::new();
            for y in y0..=y1 {
                for x in x0..=x1 {
                    v.push(self.cell(x, y));
                }
            }
            return v;
        }
        let mut v = Vec::new();
        for x in x0..x1 {
            v.push(self.cell(x, y0));
        }
        for y in y0..y1 {
            v.push(self.cell(x1, y));
        }
        for x in (x0 + 1..=x1).rev() {
            v.push(self.cell(x, y1));
        }
        for y in (y0 + 1..=y1).rev() {
            v.push(self.cell(x0, y));
        }
        v
    }
}

/// Abstract description of one grid world: a state space, per-state
/// agent cell, goal and badness, successor of the non-agent part, and the
/// observation key.
struct World {
    states: usize,
    actions: usize,
    agent: Vec<usize>,
    goal: Vec<bool>,
    bad: Vec<bool>,
    obs_key: Vec<(usize, Option<usize>, usize)>,
    initial: Vec<(usize, f64)>,
    /// Successor state for an action and the agent's next cell.
    next: Box<dyn Fn(usize, usize, usize) -> usize>,
    /// Whether action `a` is a move (otherwise the agent stays put).
    is_move: Box<dyn Fn(usize) -> bool>,
}

fn pick(cells: &[usize], rng: &mut ChaCha8Rng) -> Result<usize> {
    cells
        .choose(rng)
        .copied()
        .ok_or_else(|| Error::InvalidArgument("grid too small to place the agent".into()))
}

fn intercept(spec: GridSpec, rng: &mut ChaCha8Rng) -> Result<World> {
    let c = spec.cells();
    let (w, h) = (spec.width, spec.height);
    let exits = [spec.cell(w - 1, 0), spec.cell(w - 1, h - 1)];
    let states = 2 * c * c;
    let decode = move |s: usize| (s % c, (s / c) % c, s / (c * c));
    let encode = move |agent: usize, target: usize, gone: usize| (gone * c + target) * c + agent;
    let mut agent = Vec::with_capacity(states);
    let mut goal = Vec::with_capacity(states);
    let mut bad = Vec::with_capacity(states);
    let mut obs_key = Vec::with_capacity(states);
    for s in 0..states {
        let (a, t, gone) = decode(s);
        agent.push(a);
        goal.push(if gone == 0 { a == t } else { exits.contains(&a) });
        bad.push(gone == 1);
        let seen = gone == 0 && spec.chebyshev(a, t) <= spec.view_radius;
        obs_key.push((a, seen.then_some(t), gone));
    }
    let candidates: Vec<usize> = (0..c)
        .filter(|&cell| {
            let (x, _) = spec.xy(cell);
            x >= w / 2 && !exits.contains(&cell)
        })
        .collect();
    let start = pick(&candidates, rng)?;
    let initial = (0..h)
        .map(|y| (encode(start, spec.cell(0, y), 0), 1.0 / h as f64))
        .collect();
    let next = move |s: usize, _action: usize, agent_next: usize| {
        let (_, t, gone) = decode(s);
        if gone == 1 || exits.contains(&t) {
            return encode(agent_next, t, 1);
        }
        let (tx, ty) = spec.xy(t);
        let t2 = if tx < w - 1 {
            spec.cell(tx + 1, ty)
        } else if ty <= (h - 1) / 2 {
            spec.cell(tx, ty - 1)
        } else {
            spec.cell(tx, ty + 1)
        };
        encode(agent_next, t2, 0)
    };
    Ok(World {
        states,
        actions: 4,
        agent,
        goal,
        bad,
        obs_key,
        initial,
        next: Box::new(next),
        is_move: Box::new(|_| true),
    })
}

fn evade(spec: GridSpec, rng: &mut ChaCha8Rng) -> Result<World> {
    let c = spec.cells();
    let (w, h) = (spec.width, spec.height);
    let dest = spec.cell(w - 1, h - 1);
    let safe = move |cell: usize| {
        let (x, y) = (cell % w, cell / w);
        x <= 1 && y <= 1
    };
    let states = 2 * c * c;
    let decode = move |s: usize| (s % c, (s / c) % c, s / (c * c));
    let encode = move |agent: usize, adv: usize, scanned: usize| (scanned * c + adv) * c + agent;
    let mut agent = Vec::with_capacity(states);
    let mut goal = Vec::with_capacity(states);
    let mut bad = Vec::with_capacity(states);
    let mut obs_key = Vec::with_capacity(states);
    for s in 0..states {
        let (a, v, scanned) = decode(s);
        agent.push(a);
        goal.push(a == dest);
        bad.push(a == v);
        let seen = scanned == 1 || spec.chebyshev(a, v) <= spec.view_radius;
        obs_key.push((a, seen.then_some(v), 0));
    }
    let start = pick(&(0..c).filter(|&x| safe(x)).collect::<Vec<_>>(), rng)?;
    let adv_starts: Vec<usize> = (0..c)
        .filter(|&x| {
            let (ax, ay) = spec.xy(x);
            !safe(x) && x != dest && (ax == w - 1 || ay == h - 1)
        })
        .collect();
    if adv_starts.is_empty() {
        return Err(Error::InvalidArgument("grid too small to place the adversary".into()));
    }
    let initial = adv_starts
        .iter()
        .map(|&v| (encode(start, v, 0), 1.0 / adv_starts.len() as f64))
        .collect();
    let chase = move |v: usize, a: usize| -> usize {
        let (vx, vy) = (v % w, v / w);
        let (ax, ay) = (a % w, a / w);
        let horizontal = (ax != vx).then(|| if ax > vx { vy * w + vx + 1 } else { vy * w + vx - 1 });
        let vertical = (ay != vy).then(|| if ay > vy { (vy + 1) * w + vx } else { (vy - 1) * w + vx });
        let order = if ax.abs_diff(vx) >= ay.abs_diff(vy) {
            [horizontal, vertical]
        } else {
            [vertical, horizontal]
        };
        order.into_iter().flatten().find(|&m| !safe(m)).unwrap_or(v)
    };
    let next = move |s: usize, action: usize, agent_next: usize| {
        let (a, v, _) = decode(s);
        encode(agent_next, chase(v, a), usize::from(action == 4))
    };
    Ok(World {
        states,
        actions: 5,
        agent,
        goal,
        bad,
        obs_key,
        initial,
        next: Box::new(next),
        is_move: Box::new(|a| a < 4),
    })
}

fn avoid(spec: GridSpec, rng: &mut ChaCha8Rng) -> Result<World> {
    let c = spec.cells();
    let (w, h) = (spec.width, spec.height);
    let dest = spec.cell(w - 1, h - 1);
    let ring = spec.inner_ring();
    let r = ring.len();
    let states = c * r;
    let mut agent = Vec::with_capacity(states);
    let mut goal = Vec::with_capacity(states);
    let mut bad = Vec::with_capacity(states);
    let mut obs_key = Vec::with_capacity(states);
    for s in 0..states {
        let (a, v) = (s % c, ring[s / c]);
        agent.push(a);
        goal.push(a == dest);
        bad.push(spec.manhattan(a, v) <= 1);
        obs_key.push((a, (spec.chebyshev(a, v) <= spec.view_radius).then_some(v), 0));
    }
    let start = pick(&[spec.cell(0, 0), spec.cell(0, h - 1), spec.cell(w - 1, 0)], rng)?;
    let initial = (0..r).map(|p| (p * c + start, 1.0 / r as f64)).collect();
    let next = move |s: usize, _action: usize, agent_next: usize| ((s / c + 1) % r) * c + agent_next;
    Ok(World {
        states,
        actions: 4,
        agent,
        goal,
        bad,
        obs_key,
        initial,
        next: Box::new(next),
        is_move: Box::new(|_| true),
    })
}

/// Builds the grid world described by `spec`; the seed selects the start.
pub fn generate_grid(spec: &GridSpec, seed: u64) -> Result<RobustPomdp> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let world = match spec.kind {
        GridKind::Intercept => intercept(*spec, &mut rng)?,
        GridKind::Evade => evade(*spec, &mut rng)?,
        GridKind::Avoid => avoid(*spec, &mut rng)?,
    };
    let mut symbols: HashMap<(usize, Option<usize>, usize), usize> = HashMap::new();
    let obs: Vec<usize> = world
        .obs_key
        .iter()
        .map(|k| {
            let n = symbols.len();
            *symbols.entry(*k).or_insert(n)
        })
        .collect();
    let mut b = PomdpBuilder::<Interval>::new(world.states, world.actions, symbols.len());
    for s in 0..world.states {
        b.observation(s, obs[s])?;
        if world.goal[s] {
            b.goal(s)?;
            continue;
        }
        let cost = spec.step_cost + if world.bad[s] { spec.penalty_cost } else { 0.0 };
        for a in 0..world.actions {
            b.cost(s, a, cost)?;
            let outcomes = if (world.is_move)(a) {
                spec.move_outcomes(world.agent[s], a)
            } else {
                vec![(world.agent[s], Interval::point(1.0))]
            };
            for (cell, iv) in outcomes {
                b.transition(s, a, (world.next)(s, a, cell), iv)?;
            }
        }
    }
    for &(s, p) in &world.initial {
        b.initial(s, p)?;
    }
    let model = b.build()?;
    model.validate().into_result()?;
    Ok(model)
}
