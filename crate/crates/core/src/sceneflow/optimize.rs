use ndarray::{Array2, Zip};

use crate::cloud::PointCloud;
use crate::clustering::{dbscan, ClusterLabeling};
use crate::error::{invalid, Error, Result};
use crate::sceneflow::loss::{chamfer_terms, coherence_terms, LossTerms};
use crate::sceneflow::mlp::{Gradients, MlpPrior, Real};
use crate::sceneflow::{FlowField, Optimizer, SfeConfig};
use crate::spatial::KdTree;

/// One frame pair to fit a flow for, with the coherence clustering fixed.
#[derive(Debug, Clone)]
pub struct FlowProblem {
    source: PointCloud,
    source_xyz: Vec<[f64; 3]>,
    target_tree: KdTree,
    labeling: ClusterLabeling,
    alpha: f64,
    beta: f64,
    pair_weight: f64,
}

impl FlowProblem {
    /// Clusters `source` with `config.cluster_params` to build the coherence mask.
    pub fn new(source: &PointCloud, target: &PointCloud, config: &SfeConfig) -> Result<Self> {
        config.validate()?;
        let labeling = dbscan(source, config.cluster_params)?;
        Self::with_labeling(source, target, labeling, config)
    }

    pub fn with_labeling(
        source: &PointCloud,
        target: &PointCloud,
        labeling: ClusterLabeling,
        config: &SfeConfig,
    ) -> Result<Self> {
        if source.is_empty() || target.is_empty() {
            return invalid("scene flow needs two non-empty clouds");
        }
        if labeling.len() != source.len() {
            return invalid("labeling does not match the source cloud");
        }
        source.require_finite("scene flow source")?;
        target.require_finite("scene flow target")?;
        Ok(Self {
            source: source.clone(),
            source_xyz: source.as_f64(),
            target_tree: KdTree::build(target.as_f64()),
            labeling,
            alpha: config.alpha,
            beta: config.beta,
            pair_weight: config.pair_weight,
        })
    }

    pub fn source(&self) -> &PointCloud {
        &self.source
    }

    pub fn labeling(&self) -> &ClusterLabeling {
        &self.labeling
    }

    /// Objective value and, optionally, its gradient with respect to each flow vector.
    pub(crate) fn evaluate(
        &self,
        flows: &[[f64; 3]],
        want_grad: bool,
    ) -> (LossTerms, Option<Vec<[f64; 3]>>) {
        let warped: Vec<[f64; 3]> = self
            .source_xyz
            .iter()
            .zip(flows)
            .map(|(p, f)| [p[0] + f[0], p[1] + f[1], p[2] + f[2]])
            .collect();
        let mut grad = want_grad.then(|| vec![[0.0f64; 3]; flows.len()]);
        let chamfer = chamfer_terms(&warped, &self.target_tree, grad.as_deref_mut());
        if let Some(g) = grad.as_mut() {
            for v in g.iter_mut() {
                for a in v.iter_mut() {
                    *a *= self.alpha;
                }
            }
        }
        let coherence = coherence_terms(
            flows,
            &self.labeling,
            self.pair_weight,
            grad.as_deref_mut().map(|g| (g, self.beta)),
        );
        let terms = LossTerms {
            chamfer,
            coherence,
            total: self.alpha * chamfer + self.beta * coherence,
        };
        (terms, grad)
    }
}

fn output_to_flows<F: Real>(out: &Array2<F>) -> Vec<[f64; 3]> {
    out.rows()
        .into_iter()
        .map(|r| [r[0].f64(), r[1].f64(), r[2].f64()])
        .collect()
}

fn loss_only<F: Real>(prior: &MlpPrior<F>, problem: &FlowProblem) -> LossTerms {
    let out = prior.forward(&MlpPrior::<F>::input_matrix(&problem.source));
    problem.evaluate(&output_to_flows(&out), false).0
}

fn loss_and_gradient<F: Real>(
    prior: &MlpPrior<F>,
    problem: &FlowProblem,
    iteration: usize,
) -> Result<(LossTerms, Gradients<F>)> {
    let cache = prior.forward_cached(MlpPrior::<F>::input_matrix(&problem.source));
    let flows = output_to_flows(cache.output());
    let (terms, grad) = problem.evaluate(&flows, true);
    if !terms.is_finite() {
        return Err(Error::NumericFailure {
            iteration,
            what: "loss",
        });
    }
    let grad = grad.unwrap();
    let mut d_out = Array2::<F>::zeros((grad.len(), 3));
    for (mut row, g) in d_out.rows_mut().into_iter().zip(&grad) {
        row[0] = F::of(g[0]);
        row[1] = F::of(g[1]);
        row[2] = F::of(g[2]);
    }
    let grads = prior.backward(&cache, d_out);
    if !grads.is_finite() {
        return Err(Error::NumericFailure {
            iteration,
            what: "gradient",
        });
    }
    Ok((terms, grads))
}

/// Objective value and its gradient with respect to every network parameter.
///
/// Nearest-neighbor correspondences are treated as constants.
pub fn loss_gradient<F: Real>(
    prior: &MlpPrior<F>,
    problem: &FlowProblem,
) -> Result<(LossTerms, Gradients<F>)> {
    loss_and_gradient(prior, problem, 0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    /// 1-based: the state after this many parameter updates.
    pub iteration: usize,
    pub chamfer: f64,
    pub coherence: f64,
    pub total: f64,
    /// Lowest total seen so far, the initial state included.
    pub best_total: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizationTrace {
    /// Objective at the initial parameters.
    pub initial: LossTerms,
    pub entries: Vec<TraceEntry>,
}

/// Result of one runtime fit.
#[derive(Debug, Clone)]
pub struct FlowEstimate<F: Real = f32> {
    /// Flow of the best iterate at each source point.
    pub flow: FlowField,
    pub trace: OptimizationTrace,
    /// Best-iterate network; evaluates the fitted field at arbitrary points.
    pub prior: MlpPrior<F>,
    /// Clustering used by the coherence term.
    pub labeling: ClusterLabeling,
    pub best_loss: LossTerms,
}

enum OptState<F: Real> {
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        m: Gradients<F>,
        v: Gradients<F>,
        t: i32,
    },
}

impl<F: Real> OptState<F> {
    fn new(opt: Optimizer, prior: &MlpPrior<F>) -> Self {
        match opt {
            Optimizer::GradientDescent => OptState::Sgd,
            Optimizer::Adam {
                beta1,
                beta2,
                epsilon,
            } => OptState::Adam {
                beta1,
                beta2,
                epsilon,
                m: Gradients::zeros_like(prior),
                v: Gradients::zeros_like(prior),
                t: 0,
            },
        }
    }

    /// Turns a gradient into the step to subtract from the parameters.
    fn step(&mut self, mut g: Gradients<F>, lr: f64) -> Gradients<F> {
        match self {
            OptState::Sgd => {
                let lr = F::of(lr);
                g.weights.iter_mut().for_each(|w| w.mapv_inplace(|x| x * lr));
                g.biases.iter_mut().for_each(|b| b.mapv_inplace(|x| x * lr));
                g
            }
            OptState::Adam {
                beta1,
                beta2,
                epsilon,
                m,
                v,
                t,
            } => {
                *t += 1;
                let (b1, b2) = (F::of(*beta1), F::of(*beta2));
                let one = F::one();
                let c1 = F::of(1.0 - beta1.powi(*t));
                let c2 = F::of(1.0 - beta2.powi(*t));
                let lr = F::of(lr);
                let eps = F::of(*epsilon);
                let update = |g: &mut F, m: &mut F, v: &mut F| {
                    *m = b1 * *m + (one - b1) * *g;
                    *v = b2 * *v + (one - b2) * *g * *g;
                    let mh = *m / c1;
                    let vh = *v / c2;
                    *g = lr * mh / (vh.sqrt() + eps);
                };
                for ((gw, mw), vw) in g.weights.iter_mut().zip(&mut m.weights).zip(&mut v.weights) {
                    Zip::from(gw).and(mw).and(vw).for_each(update);
                }
                for ((gb, mb), vb) in g.biases.iter_mut().zip(&mut m.biases).zip(&mut v.biases) {
                    Zip::from(gb).and(mb).and(vb).for_each(update);
                }
                g
            }
        }
    }
}

/// Fits a flow field from `source` to `target` in single precision.
pub fn estimate_flow(
    source: &PointCloud,
    target: &PointCloud,
    config: &SfeConfig,
) -> Result<FlowEstimate<f32>> {
    estimate_flow_in::<f32>(source, target, config)
}

/// Fits a flow field from `source` to `target`, evaluating the network in `F`.
///
/// Runs `config.iterations` updates and returns the iterate with the lowest
/// objective, the starting point included.
pub fn estimate_flow_in<F: Real>(
    source: &PointCloud,
    target: &PointCloud,
    config: &SfeConfig,
) -> Result<FlowEstimate<F>> {
    let problem = FlowProblem::new(source, target, config)?;
    fit(&problem, config)
}

/// Step halvings tried per gradient-descent update before giving up on it.
const MAX_HALVINGS: u32 = 20;

pub(crate) fn fit<F: Real>(problem: &FlowProblem, config: &SfeConfig) -> Result<FlowEstimate<F>> {
    let mut prior =
        MlpPrior::<F>::new(config.hidden_width, config.num_layers, config.init_gain, config.seed)?;
    let mut state = OptState::new(config.optimizer, &prior);
    let safeguard = matches!(config.optimizer, Optimizer::GradientDescent);
    let mut lr = config.learning_rate;

    let (initial, mut grads) = loss_and_gradient(&prior, problem, 0)?;
    let mut current = initial;
    let mut best = (initial, prior.clone());
    let mut trace = OptimizationTrace {
        initial,
        entries: Vec::with_capacity(config.iterations),
    };
    for it in 1..=config.iterations {
        let last = it == config.iterations;
        let mut halvings = 0;
        let (terms, next) = loop {
            let step = state.step(grads.clone(), lr);
            let mut candidate = prior.clone();
            candidate.apply_step(&step);
            let evaluated = if last {
                let t = loss_only(&candidate, problem);
                if t.is_finite() {
                    Ok((t, Gradients::zeros_like(&candidate)))
                } else {
                    Err(Error::NumericFailure {
                        iteration: it,
                        what: "loss",
                    })
                }
            } else {
                loss_and_gradient(&candidate, problem, it)
            };
            if !safeguard {
                let (t, g) = evaluated?;
                prior = candidate;
                break (t, g);
            }
            // gradient descent: halve the step until the objective does not grow
            match evaluated {
                Ok((t, g)) if t.total <= current.total => {
                    prior = candidate;
                    break (t, g);
                }
                Ok(_) | Err(Error::NumericFailure { .. }) if halvings < MAX_HALVINGS => {
                    halvings += 1;
                    lr *= 0.5;
                }
                Ok(_) | Err(Error::NumericFailure { .. }) => {
                    // no descent at any tried step size; stay put
                    break (current, grads.clone());
                }
                Err(e) => return Err(e),
            }
        };
        grads = next;
        current = terms;
        if terms.total < best.0.total {
            best = (terms, prior.clone());
        }
        trace.entries.push(TraceEntry {
            iteration: it,
            chamfer: terms.chamfer,
            coherence: terms.coherence,
            total: terms.total,
            best_total: best.0.total,
        });
    }
    let (best_loss, prior) = best;
    Ok(FlowEstimate {
        flow: prior.flow_at(problem.source()),
        trace,
        prior,
        labeling: problem.labeling().clone(),
        best_loss,
    })
}
