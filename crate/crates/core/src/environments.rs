//! Episodic environments and the episode runner.
//!
//! [`EnvironmentFactory`] is the extension point for new domains: it reports
//! the action and observation sizes and builds one fresh [`Environment`] per
//! episode seed. Two families ship here, a tile gridworld ([`GridWorld`]) and
//! loop-level stubs ([`StubEnvironment`]).

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::behaviour::{ActionSequence, BehaviourError};
use crate::network::{select_action, ArchitectureDescriptor, NetworkError};
use crate::rng::DeterministicRng;

/// The built-in deceptive layout.
pub const DECEPTIVE_LAYOUT: &str = include_str!("../assets/deceptive.txt");

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("layout line {line}, column {column}: {reason}")]
    Layout { line: usize, column: usize, reason: String },
    #[error("layout: {0}")]
    LayoutShape(String),
    #[error("action {action} is outside the action space of size {size}")]
    BadAction { action: usize, size: usize },
    #[error("network outputs {network} actions but the environment has {environment}")]
    ActionSpace { network: usize, environment: usize },
    #[error("network expects {network} inputs but the environment observes {environment}")]
    ObservationSpace { network: usize, environment: usize },
    #[error("unknown environment `{0}` (expected `deceptive`, `stub:const`, `stub:count0` or a layout file)")]
    Unknown(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Behaviour(#[from] BehaviourError),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub reward: f64,
    pub done: bool,
}

pub trait Environment {
    fn observe(&self) -> Vec<f32>;
    fn step(&mut self, action: usize) -> Result<Transition, EnvError>;

    /// Human-readable frame, if the environment supports it.
    fn render(&self) -> Option<String> {
        None
    }
}

pub trait EnvironmentFactory: Send + Sync {
    fn action_space_size(&self) -> usize;
    fn observation_length(&self) -> usize;
    fn create(&self, episode_seed: u64) -> Box<dyn Environment>;
}

/// Outcome of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub score: f64,
    pub bc: ActionSequence,
    pub lifespan: usize,
}

/// Runs at most `frames` steps, choosing actions with `policy`.
pub fn run_policy_episode<P>(
    env_factory: &dyn EnvironmentFactory,
    episode_seed: u64,
    frames: usize,
    mut policy: P,
) -> Result<Episode, EnvError>
where
    P: FnMut(&[f32]) -> Result<usize, EnvError>,
{
    let mut env = env_factory.create(episode_seed);
    let mut actions = Vec::with_capacity(frames);
    let mut score = 0.0;
    while actions.len() < frames {
        let action = policy(&env.observe())?;
        let transition = env.step(action)?;
        actions.push(action);
        score += transition.reward;
        if transition.done {
            break;
        }
    }
    let bc = ActionSequence::from_actions(&actions, frames)?;
    Ok(Episode { score, lifespan: actions.len(), bc })
}

/// Runs one episode of the network policy defined by `weights`.
pub fn run_episode(
    weights: &[f32],
    arch: &ArchitectureDescriptor,
    env_factory: &dyn EnvironmentFactory,
    episode_seed: u64,
    frames: usize,
) -> Result<Episode, EnvError> {
    check_compatible(arch, env_factory)?;
    if weights.len() != arch.parameter_count() {
        return Err(NetworkError::WeightShape {
            layer: arch.layers().len(),
            expected: arch.parameter_count(),
            got: weights.len(),
        }
        .into());
    }
    run_policy_episode(env_factory, episode_seed, frames, |obs| {
        let scores = arch.forward(weights, obs)?;
        Ok(select_action(&scores)?)
    })
}

pub fn check_compatible(arch: &ArchitectureDescriptor, env: &dyn EnvironmentFactory) -> Result<(), EnvError> {
    if arch.output_units() != env.action_space_size() {
        return Err(EnvError::ActionSpace {
            network: arch.output_units(),
            environment: env.action_space_size(),
        });
    }
    if arch.input_len() != env.observation_length() {
        return Err(EnvError::ObservationSpace {
            network: arch.input_len(),
            environment: env.observation_length(),
        });
    }
    Ok(())
}

/// Resolves an environment name: `deceptive`, `stub:const`, `stub:count0`,
/// or a path to a layout file.
pub fn environment_from_spec(spec: &str) -> Result<Arc<dyn EnvironmentFactory>, EnvError> {
    match spec {
        "deceptive" => Ok(Arc::new(GridWorld::deceptive())),
        "stub:const" => Ok(Arc::new(StubEnvironment::Constant)),
        "stub:count0" => Ok(Arc::new(StubEnvironment::CountZero)),
        other if other.starts_with("stub:") => Err(EnvError::Unknown(other.to_string())),
        path => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| EnvError::Other(format!("cannot read layout {path}: {e}")))?;
            Ok(Arc::new(GridWorld::load_layout(&text)?))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tile {
    Wall,
    Floor,
    Diamond,
    Exit,
}

impl Tile {
    fn symbol(self) -> char {
        match self {
            Tile::Wall => '#',
            Tile::Floor => '.',
            Tile::Diamond => 'D',
            Tile::Exit => 'E',
        }
    }
}

/// Gridworld actions, in action-index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    Up,
    Down,
    Left,
    Right,
    Noop,
}

impl Move {
    pub const ALL: [Move; 5] = [Move::Up, Move::Down, Move::Left, Move::Right, Move::Noop];

    pub fn from_index(action: usize) -> Option<Move> {
        Self::ALL.get(action).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Move::Up => (0, -1),
            Move::Down => (0, 1),
            Move::Left => (-1, 0),
            Move::Right => (1, 0),
            Move::Noop => (0, 0),
        }
    }
}

/// Observation channels per cell, in order.
pub const GRID_CHANNELS: usize = 5;

/// A parsed, validated gridworld layout.
///
/// Observations are `width * height * 5` one-hot values, cell by cell in row
/// major order with channels `[wall, floor, diamond, exit, agent]` (the
/// agent's cell has only the agent channel set), followed by the agent's
/// column and row scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridWorld {
    width: usize,
    height: usize,
    tiles: Vec<Tile>,
    start: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridState {
    pub position: (usize, usize),
    pub tiles: Vec<Tile>,
    pub done: bool,
}

impl GridWorld {
    pub fn deceptive() -> Self {
        Self::load_layout(DECEPTIVE_LAYOUT).expect("shipped layout is valid")
    }

    /// Parses a `#.DEP` grid. Lines starting with `!` are comments.
    pub fn load_layout(text: &str) -> Result<Self, EnvError> {
        let mut rows: Vec<(usize, &str)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.starts_with('!') {
                continue;
            }
            rows.push((i + 1, line));
        }
        while rows.last().is_some_and(|(_, l)| l.is_empty()) {
            rows.pop();
        }
        let Some(&(_, first)) = rows.first() else {
            return Err(EnvError::LayoutShape("layout has no rows".into()));
        };
        let width = first.chars().count();
        let height = rows.len();
        if width < 3 || height < 3 {
            return Err(EnvError::LayoutShape(format!("layout must be at least 3x3, got {width}x{height}")));
        }
        let mut tiles = Vec::with_capacity(width * height);
        let mut start = None;
        let mut exits = 0;
        for (y, &(line, row)) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(EnvError::Layout {
                    line,
                    column: row.chars().count().min(width) + 1,
                    reason: format!("row has {} cells, expected {width}", row.chars().count()),
                });
            }
            for (x, c) in row.chars().enumerate() {
                let err = |reason: String| EnvError::Layout { line, column: x + 1, reason };
                let tile = match c {
                    '#' => Tile::Wall,
                    '.' => Tile::Floor,
                    'D' => Tile::Diamond,
                    'E' => {
                        exits += 1;
                        Tile::Exit
                    }
                    'P' => {
                        if start.is_some() {
                            return Err(err("second start cell `P`".into()));
                        }
                        start = Some((x, y));
                        Tile::Floor
                    }
                    other => return Err(err(format!("unknown tile `{other}`"))),
                };
                let border = x == 0 || y == 0 || x == width - 1 || y == height - 1;
                if border && tile != Tile::Wall {
                    return Err(err("border cells must be walls".into()));
                }
                tiles.push(tile);
            }
        }
        let start = start.ok_or_else(|| EnvError::LayoutShape("layout has no start cell `P`".into()))?;
        if exits == 0 {
            return Err(EnvError::LayoutShape("layout has no exit `E`".into()));
        }
        Ok(Self { width, height, tiles, start })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn start(&self) -> (usize, usize) {
        self.start
    }

    pub fn tile(&self, x: usize, y: usize) -> Tile {
        self.tiles[y * self.width + x]
    }

    pub fn diamond_count(&self) -> usize {
        self.tiles.iter().filter(|&&t| t == Tile::Diamond).count()
    }

    pub fn initial_state(&self) -> GridState {
        GridState { position: self.start, tiles: self.tiles.clone(), done: false }
    }

    /// Applies one move. Walls block, diamonds pay +1 once, the exit pays +1
    /// and ends the episode. Stepping a finished episode does nothing.
    pub fn step(&self, state: &mut GridState, action: Move) -> Transition {
        if state.done {
            return Transition { reward: 0.0, done: true };
        }
        let (dx, dy) = action.delta();
        let x = state.position.0.wrapping_add_signed(dx);
        let y = state.position.1.wrapping_add_signed(dy);
        // borders are walls, so neighbours of interior cells stay in range
        let cell = y * self.width + x;
        let reward = match state.tiles[cell] {
            Tile::Wall => return Transition { reward: 0.0, done: false },
            Tile::Floor => 0.0,
            Tile::Diamond => {
                state.tiles[cell] = Tile::Floor;
                1.0
            }
            Tile::Exit => {
                state.done = true;
                1.0
            }
        };
        state.position = (x, y);
        Transition { reward, done: state.done }
    }

    pub fn observe(&self, state: &GridState) -> Vec<f32> {
        let mut obs = vec![0.0; self.observation_len()];
        let agent = state.position.1 * self.width + state.position.0;
        for (i, tile) in state.tiles.iter().enumerate() {
            let channel = match tile {
                _ if i == agent => 4,
                Tile::Wall => 0,
                Tile::Floor => 1,
                Tile::Diamond => 2,
                Tile::Exit => 3,
            };
            obs[i * GRID_CHANNELS + channel] = 1.0;
        }
        let n = self.width * self.height * GRID_CHANNELS;
        obs[n] = state.position.0 as f32 / (self.width - 1) as f32;
        obs[n + 1] = state.position.1 as f32 / (self.height - 1) as f32;
        obs
    }

    pub fn observation_len(&self) -> usize {
        self.width * self.height * GRID_CHANNELS + 2
    }

    pub fn render(&self, state: &GridState) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                if (x, y) == state.position && !state.done {
                    out.push('P');
                } else {
                    out.push(state.tiles[y * self.width + x].symbol());
                }
            }
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for GridWorld {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&self.initial_state()))
    }
}

struct GridEpisode {
    world: GridWorld,
    state: GridState,
}

impl Environment for GridEpisode {
    fn observe(&self) -> Vec<f32> {
        self.world.observe(&self.state)
    }

    fn step(&mut self, action: usize) -> Result<Transition, EnvError> {
        let mv = Move::from_index(action).ok_or(EnvError::BadAction { action, size: Move::ALL.len() })?;
        Ok(self.world.step(&mut self.state, mv))
    }

    fn render(&self) -> Option<String> {
        Some(self.world.render(&self.state))
    }
}

// The gridworld is deterministic, so the episode seed is ignored.
impl EnvironmentFactory for GridWorld {
    fn action_space_size(&self) -> usize {
        Move::ALL.len()
    }

    fn observation_length(&self) -> usize {
        self.observation_len()
    }

    fn create(&self, _episode_seed: u64) -> Box<dyn Environment> {
        Box::new(GridEpisode { world: self.clone(), state: self.initial_state() })
    }
}

/// Loop-level test environments. Episodes never end early.
///
/// * `Constant`: scores exactly 1 per episode whatever the agent does.
/// * `CountZero`: scores +1 for every frame the agent picks action 0.
///
/// Both have three actions and observe `[t mod 7 / 7, t mod 3 / 3, u, 1]`
/// where `t` is the frame index and `u` is a uniform drawn from the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StubEnvironment {
    Constant,
    CountZero,
}

struct StubEpisode {
    kind: StubEnvironment,
    frame: usize,
    seed_feature: f32,
}

impl Environment for StubEpisode {
    fn observe(&self) -> Vec<f32> {
        vec![
            (self.frame % 7) as f32 / 7.0,
            (self.frame % 3) as f32 / 3.0,
            self.seed_feature,
            1.0,
        ]
    }

    fn step(&mut self, action: usize) -> Result<Transition, EnvError> {
        if action >= 3 {
            return Err(EnvError::BadAction { action, size: 3 });
        }
        let reward = match self.kind {
            StubEnvironment::Constant => f64::from(u8::from(self.frame == 0)),
            StubEnvironment::CountZero => f64::from(u8::from(action == 0)),
        };
        self.frame += 1;
        Ok(Transition { reward, done: false })
    }
}

impl EnvironmentFactory for StubEnvironment {
    fn action_space_size(&self) -> usize {
        3
    }

    fn observation_length(&self) -> usize {
        4
    }

    fn create(&self, episode_seed: u64) -> Box<dyn Environment> {
        let seed_feature = DeterministicRng::new(episode_seed).uniform() as f32;
        Box::new(StubEpisode { kind: *self, frame: 0, seed_feature })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "#####\n#P.E#\n#####\n";

    #[test]
    fn minimal_layout_parses() {
        let world = GridWorld::load_layout("###\n#P#\n#E#\n###\n").unwrap();
        assert_eq!((world.width(), world.height()), (3, 4));
        assert_eq!(world.start(), (1, 1));
    }

    #[test]
    fn layout_errors_have_positions() {
        let pos = |text: &str| match GridWorld::load_layout(text) {
            Err(EnvError::Layout { line, column, .. }) => Some((line, column)),
            Err(_) => None,
            Ok(_) => panic!("accepted {text:?}"),
        };
        assert_eq!(pos("#####\n#PPE#\n#####\n"), Some((2, 3)));
        assert_eq!(pos("#####\n#P?E#\n#####\n"), Some((2, 3)));
        assert_eq!(pos("! comment\n#####\n#P.E#\n####\n"), Some((4, 5)));
        assert_eq!(pos("#####\nP..E#\n#####\n"), Some((2, 1)));
        assert_eq!(pos("#####\n#..E#\n#####\n"), None);
        assert_eq!(pos("#####\n#P..#\n#####\n"), None);
        assert_eq!(pos(""), None);
    }

    #[test]
    fn step_rules() {
        let world = GridWorld::load_layout("######\n#DP.E#\n######\n").unwrap();
        let mut s = world.initial_state();
        assert_eq!(world.step(&mut s, Move::Up), Transition { reward: 0.0, done: false });
        assert_eq!(s.position, (2, 1));
        assert_eq!(world.step(&mut s, Move::Left).reward, 1.0);
        assert_eq!(world.step(&mut s, Move::Right).reward, 0.0);
        assert_eq!(world.step(&mut s, Move::Left).reward, 0.0);
        assert_eq!(world.step(&mut s, Move::Noop), Transition { reward: 0.0, done: false });
        for _ in 0..2 {
            world.step(&mut s, Move::Right);
        }
        assert_eq!(world.step(&mut s, Move::Right), Transition { reward: 1.0, done: true });
        assert_eq!(world.step(&mut s, Move::Left), Transition { reward: 0.0, done: true });
    }

    #[test]
    fn observation_encoding() {
        let world = GridWorld::load_layout(TINY).unwrap();
        let obs = world.observe(&world.initial_state());
        assert_eq!(obs.len(), 5 * 3 * 5 + 2);
        // agent cell (1,1) -> index 6
        assert_eq!(&obs[6 * 5..7 * 5], &[0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(&obs[7 * 5..8 * 5], &[0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(&obs[8 * 5..9 * 5], &[0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(&obs[75..], &[0.25, 0.5]);
        // each cell is one-hot
        for cell in obs[..75].chunks(5) {
            assert_eq!(cell.iter().sum::<f32>(), 1.0);
        }
    }

    #[test]
    fn padding_after_early_exit() {
        let world = GridWorld::load_layout("######\n#P..E#\n######\n").unwrap();
        let ep = run_policy_episode(&world, 0, 10, |_| Ok(Move::Right.index())).unwrap();
        assert_eq!(ep.bc.to_string(), "333xxxxxxx");
        assert_eq!(ep.lifespan, 3);
        assert_eq!(ep.score, 1.0);
    }

    #[test]
    fn full_episode_has_no_padding() {
        let world = GridWorld::load_layout(TINY).unwrap();
        let ep = run_policy_episode(&world, 0, 8, |_| Ok(Move::Up.index())).unwrap();
        assert_eq!(ep.bc.to_string(), "00000000");
        assert_eq!(ep.lifespan, 8);
        assert_eq!(ep.score, 0.0);
    }

    #[test]
    fn stub_scores() {
        let ep = run_policy_episode(&StubEnvironment::Constant, 3, 20, |_| Ok(2)).unwrap();
        assert_eq!((ep.score, ep.lifespan), (1.0, 20));
        let mut t = 0;
        let ep = run_policy_episode(&StubEnvironment::CountZero, 3, 20, |_| {
            t += 1;
            Ok(t % 2)
        })
        .unwrap();
        assert_eq!(ep.score, 10.0);
        assert!(run_policy_episode(&StubEnvironment::CountZero, 3, 5, |_| Ok(3)).is_err());
    }

    #[test]
    fn shape_mismatch_is_reported_before_stepping() {
        let world = GridWorld::load_layout(TINY).unwrap();
        let arch = ArchitectureDescriptor::dense(world.observation_len(), &[], 4).unwrap();
        let weights = vec![0.0; arch.parameter_count()];
        assert!(matches!(
            run_episode(&weights, &arch, &world, 0, 5),
            Err(EnvError::ActionSpace { network: 4, environment: 5 })
        ));
        let arch = ArchitectureDescriptor::dense(3, &[], 5).unwrap();
        let weights = vec![0.0; arch.parameter_count()];
        assert!(matches!(
            run_episode(&weights, &arch, &world, 0, 5),
            Err(EnvError::ObservationSpace { .. })
        ));
    }

    #[test]
    fn environment_names() {
        assert!(environment_from_spec("deceptive").is_ok());
        assert_eq!(environment_from_spec("stub:const").unwrap().action_space_size(), 3);
        assert!(matches!(environment_from_spec("stub:nope"), Err(EnvError::Unknown(_))));
        assert!(environment_from_spec("/nonexistent/layout.txt").is_err());
    }
}
