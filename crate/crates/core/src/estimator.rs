//! The full estimation pipeline: pose in, intention probabilities out.

use std::sync::Arc;

use thiserror::Error;

use crate::floorplan::OccupancyGrid;
use crate::geom::Point;
use crate::hmm::{max_goals, Branch, HmmError, HmmParams, IntentionState, StateLabel, TransitionMatrix};
use crate::planner::{CutDelta, Planner, RobotDisk};
use crate::scalar::Scalar;
use crate::validation::{
    alternative_poses, associate_with, update_trigger, validate_motion, LowPass,
    NodeIndex, NodeVisibility, ValidationConfig, ValidationError, WorkerPose,
};
use crate::voronoi::{VoronoiError, VoronoiGraph};

/// Bucket size of the node index, in metres.
const INDEX_BUCKET: f64 = 1.0;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Hmm(#[from] HmmError),
    #[error(transparent)]
    Graph(#[from] VoronoiError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig<S> {
    pub validation: ValidationConfig<S>,
    pub hmm: HmmParams<S>,
}

impl<S: Scalar> Default for EstimatorConfig<S> {
    fn default() -> Self {
        Self {
            validation: ValidationConfig::default(),
            hmm: HmmParams::default(),
        }
    }
}

/// Everything computed by one estimator update.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateUpdate<S> {
    pub pose: WorkerPose,
    pub d: Vec<S>,
    pub v: Vec<S>,
    pub v_hat: Vec<S>,
    pub probabilities: Vec<S>,
    pub argmax: StateLabel,
    pub branch: Branch,
    /// The observed pose saw no node and fell back to the nearest one.
    pub fallback: bool,
    /// No goal is reachable from the node the worker is associated with most.
    pub trapped: bool,
}

#[derive(Debug, Clone)]
pub struct Estimator<S> {
    grid: Arc<OccupancyGrid>,
    planner: Planner,
    node_positions: Vec<Point>,
    node_index: NodeIndex,
    config: EstimatorConfig<S>,
    transition: TransitionMatrix<S>,
    state: IntentionState<S>,
    lowpass: LowPass<S>,
    trigger_ref: Option<WorkerPose>,
    last_position: Option<Point>,
    robots: Vec<RobotDisk>,
    updates: usize,
}

impl<S: Scalar> Estimator<S> {
    pub fn new(grid: Arc<OccupancyGrid>, graph: VoronoiGraph, config: EstimatorConfig<S>) -> Result<Self, EstimatorError> {
        config.validation.validate()?;
        config.hmm.validate()?;
        let g = graph.goal_count();
        let transition = TransitionMatrix::build(g, &config.hmm)?;
        let state = IntentionState::new(g, &config.hmm)?;
        if g > crate::hmm::SOFT_GOAL_LIMIT {
            log::warn!("{g} goals declared; estimates degrade beyond {}", crate::hmm::SOFT_GOAL_LIMIT);
        }
        let node_positions: Vec<Point> = graph.nodes().iter().map(|n| n.position).collect();
        let node_index = NodeIndex::new(&node_positions, INDEX_BUCKET);
        Ok(Self {
            grid,
            planner: Planner::new(graph),
            node_positions,
            node_index,
            lowpass: LowPass::new(config.validation.lambda, g),
            config,
            transition,
            state,
            trigger_ref: None,
            last_position: None,
            robots: Vec::new(),
            updates: 0,
        })
    }

    pub fn graph(&self) -> &VoronoiGraph {
        self.planner.graph()
    }

    pub fn planner(&self) -> &Planner {
        &self.planner
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn config(&self) -> &EstimatorConfig<S> {
        &self.config
    }

    pub fn state(&self) -> &IntentionState<S> {
        &self.state
    }

    pub fn probabilities(&self) -> &[S] {
        self.state.probabilities()
    }

    pub fn goal_labels(&self) -> Vec<String> {
        self.graph().goal_labels()
    }

    pub fn goal_count(&self) -> usize {
        self.state.goals()
    }

    /// Number of updates that reached the decoder.
    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn robots(&self) -> &[RobotDisk] {
        &self.robots
    }

    /// Replaces the robot obstacles and updates the goal distances.
    pub fn set_robots(&mut self, robots: &[RobotDisk]) -> CutDelta {
        self.robots = robots.to_vec();
        self.planner.set_robots(robots, Some(&self.grid))
    }

    fn distances_from(&self, position: Point, poses: &[WorkerPose], vis: &NodeVisibility) -> Vec<(Vec<S>, bool, usize)> {
        let field_rows = |entries: &[(usize, S)]| {
            let g = self.state.goals();
            let mut d = vec![S::zero(); g];
            for &(i, ci) in entries {
                for (j, dj) in d.iter_mut().enumerate() {
                    *dj = *dj + ci * S::lit(self.planner.distance(i, j));
                }
            }
            d
        };
        debug_assert!(poses.iter().all(|p| p.position() == position));
        poses
            .iter()
            .map(|p| {
                let a = associate_with(p, &self.node_positions, vis, &self.config.validation);
                (field_rows(&a.entries), a.fallback, a.top().unwrap_or(0))
            })
            .collect()
    }

    /// Feeds one observed pose. Returns the update when the pose triggered one.
    pub fn observe(&mut self, pose: WorkerPose) -> Result<Option<EstimateUpdate<S>>, EstimatorError> {
        let Some(reference) = self.trigger_ref else {
            self.trigger_ref = Some(pose);
            self.last_position = Some(pose.position());
            return Ok(None);
        };
        if !update_trigger(&reference, &pose, &self.config.validation) {
            return Ok(None);
        }
        self.trigger_ref = Some(pose);
        let l_prev = self.last_position.expect("set with the trigger reference");
        let alternatives = match alternative_poses(l_prev, pose.position(), &self.config.validation) {
            Ok(a) => a,
            Err(ValidationError::NoMotion(_)) => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let cfg = &self.config.validation;
        let observed_vis =
            NodeVisibility::compute_indexed(pose.position(), &[pose.theta], &self.node_positions, &self.node_index, &self.grid, &self.robots, cfg);
        let (d, fallback, top) = self.distances_from(pose.position(), &[pose], &observed_vis).remove(0);

        let per_point = cfg.headings.len();
        let mut table = Vec::with_capacity(alternatives.len());
        for chunk in alternatives.chunks(per_point) {
            let position = chunk[0].position();
            let headings: Vec<f64> = chunk.iter().map(|p| p.theta).collect();
            let vis = NodeVisibility::compute_indexed(position, &headings, &self.node_positions, &self.node_index, &self.grid, &self.robots, cfg);
            table.extend(self.distances_from(position, chunk, &vis).into_iter().map(|(row, _, _)| row));
        }
        let v = validate_motion(&d, &table);
        let v_hat = self.lowpass.apply(&v);
        let row = self.state.observe(&v_hat, &self.transition, &self.config.hmm)?;
        self.last_position = Some(pose.position());
        self.updates += 1;
        let trapped = (0..self.state.goals()).all(|j| !self.planner.is_reachable(top, j));
        Ok(Some(EstimateUpdate {
            pose,
            d,
            v,
            v_hat,
            probabilities: self.state.probabilities().to_vec(),
            argmax: self.state.argmax(),
            branch: row.branch,
            fallback,
            trapped,
        }))
    }

    /// Adds a goal at `position`, snapping it onto the graph. Returns its goal index.
    pub fn add_goal(&mut self, position: Point, label: &str) -> Result<usize, EstimatorError> {
        let g = self.state.goals();
        let max = max_goals(&self.config.hmm);
        if g + 1 > max {
            return Err(HmmError::TooManyGoals { requested: g + 1, max }.into());
        }
        let mut graph = self.graph().clone();
        graph.add_goal(position, label)?;
        self.state.add_goal(&self.config.hmm)?;
        self.rebuild(graph)?;
        self.lowpass.add_goal();
        Ok(g)
    }

    /// Removes goal `j`; its probability moves to the undecided state.
    pub fn remove_goal(&mut self, j: usize) -> Result<(), EstimatorError> {
        self.state.remove_goal(j)?;
        let mut graph = self.graph().clone();
        graph.remove_goal(j)?;
        self.rebuild(graph)?;
        self.lowpass.remove_goal(j);
        Ok(())
    }

    fn rebuild(&mut self, graph: VoronoiGraph) -> Result<(), EstimatorError> {
        self.transition = TransitionMatrix::build(graph.goal_count(), &self.config.hmm)?;
        self.node_positions = graph.nodes().iter().map(|n| n.position).collect();
        self.node_index = NodeIndex::new(&self.node_positions, INDEX_BUCKET);
        self.planner = Planner::new(graph);
        let robots = self.robots.clone();
        self.planner.set_robots(&robots, Some(&self.grid));
        Ok(())
    }
}
