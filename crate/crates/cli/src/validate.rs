//! Structural checks on a config, graph, schedule or scenario file, without
//! running anything.

use std::fmt;
use std::path::Path;

use consensus_bvp::gossip::{pairs_with_shared_alpha, PairDistribution};
use consensus_bvp::periodic::BoundarySchedule;
use consensus_bvp::scenarios::DetectionScenario;
use consensus_bvp::{Graph, NodeLabels, CONSTRUCTION_TOL};

use crate::config::{self, Mode, RunConfig, ScenarioFile};
use crate::run::{build_weights, load_graph};
use crate::Failure;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Info,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Check {
    pub status: Status,
    pub name: String,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Info => "INFO",
        };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| c.status == Status::Fail)
            .map(|c| c.name.as_str())
            .collect()
    }

    fn push(&mut self, status: Status, name: &str, detail: impl Into<String>) {
        self.checks.push(Check {
            status,
            name: name.to_string(),
            detail: detail.into(),
        });
    }

    /// Record the outcome of `result` under `name`, passing its value on.
    fn check<T>(&mut self, name: &str, result: Result<(T, String), String>) -> Option<T> {
        match result {
            Ok((value, detail)) => {
                self.push(Status::Pass, name, detail);
                Some(value)
            }
            Err(detail) => {
                self.push(Status::Fail, name, detail);
                None
            }
        }
    }
}

/// Check the file at `path`, recognising its kind from its top-level keys.
/// Only an unreadable or unrecognisable file is an `Err`.
pub fn validate(path: &Path) -> Result<Report, Failure> {
    let text = config::read(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    let has = |key: &str| value.get(key).is_some();
    let mut report = Report::default();
    if has("mode") {
        check_config(path, &mut report);
    } else if has("edges") {
        check_graph(path, &mut report, true);
    } else if has("period") {
        check_schedule(path, None, &mut report);
    } else if has("mu") {
        check_scenario(path, None, &mut report);
    } else {
        return Err(Failure::invalid(format!(
            "{}: not a config, graph, schedule or scenario file",
            path.display()
        )));
    }
    Ok(report)
}

fn check_graph(path: &Path, report: &mut Report, absorbing: bool) -> Option<(Graph, NodeLabels)> {
    let (graph, labels) = report.check(
        "graph structure",
        load_graph(path).map_err(|e| e.to_string()).map(|(g, l)| {
            let detail = format!(
                "{} boundary, {} internal, {} edges",
                g.num_boundary(),
                g.num_internal(),
                g.edges().len()
            );
            ((g, l), detail)
        }),
    )?;
    if absorbing {
        let outcome = if graph.num_boundary() == 0 {
            Err("the graph has no boundary nodes".to_string())
        } else {
            let detached = graph.detached_internal_nodes();
            if detached.is_empty() {
                Ok((
                    (),
                    "every internal node has a path to a boundary node".to_string(),
                ))
            } else {
                let names: Vec<&str> = detached.iter().filter_map(|&n| labels.label(n)).collect();
                Err(format!(
                    "no path to a boundary node from {}",
                    names.join(", ")
                ))
            }
        };
        report.check("absorbing condition", outcome)?;
    }
    let connected = if graph.is_connected() {
        "connected"
    } else {
        "not connected"
    };
    report.push(
        Status::Info,
        "connectivity",
        format!("graph is {connected}"),
    );
    Some((graph, labels))
}

fn check_schedule(path: &Path, num_boundary: Option<usize>, report: &mut Report) {
    let outcome = BoundarySchedule::load(path)
        .map_err(|e| format!("{}: {e}", path.display()))
        .and_then(|s| match num_boundary {
            Some(k) if s.num_boundary() != k => Err(format!(
                "{} values per phase for {k} boundary nodes",
                s.num_boundary()
            )),
            _ => Ok((
                (),
                format!(
                    "period {}, {} values per phase",
                    s.period(),
                    s.num_boundary()
                ),
            )),
        });
    report.check("schedule shape", outcome);
}

fn check_scenario(path: &Path, graph: Option<&Graph>, report: &mut Report) {
    let outcome = ScenarioFile::load(path)
        .map_err(|e| e.to_string())
        .and_then(|file| {
            let params = file.params();
            params.observation.validate().map_err(|e| e.to_string())?;
            if params.mu == params.threshold {
                return Err(format!("mu equals the threshold {}", params.threshold));
            }
            if let Some(graph) = graph {
                DetectionScenario::new(graph.clone(), params).map_err(|e| e.to_string())?;
            }
            let side = if params.mu < params.threshold {
                "below"
            } else {
                "above"
            };
            Ok((
                (),
                format!("mu {} is {side} threshold {}", params.mu, params.threshold),
            ))
        });
    report.check("scenario", outcome);
}

fn check_config(path: &Path, report: &mut Report) {
    let Some(config) = report.check(
        "config",
        RunConfig::load(path)
            .map(|c| {
                let mode = c.mode.name();
                (c, format!("mode {mode}, parameters complete"))
            })
            .map_err(|e| e.to_string()),
    ) else {
        return;
    };
    let absorbing = config.mode != Mode::GossipPairwise;
    let Some((graph, labels)) = check_graph(&config.graph_path, report, absorbing) else {
        return;
    };
    let k = graph.num_boundary();
    let m = graph.num_internal();

    if let Some(weights) = &config.weights {
        let outcome = build_weights(weights, &graph, config.master_seed)
            .map_err(|e| e.to_string())
            .and_then(|(system, _)| {
                system.check_support(&graph).map_err(|e| e.to_string())?;
                let worst = system
                    .full_matrix()
                    .row_sums()
                    .iter()
                    .map(|s| (s - 1.0).abs())
                    .fold(0.0, f64::max);
                if worst > CONSTRUCTION_TOL {
                    return Err(format!("row sums off by {worst:e}"));
                }
                Ok((
                    (),
                    format!("rows nonnegative, row sums within {worst:e} of 1"),
                ))
            });
        report.check("stochasticity", outcome);
    }
    if let Some(values) = &config.boundary_values {
        let outcome = if values.len() == k {
            Ok(((), format!("{k} values")))
        } else {
            Err(format!("{} values for {k} boundary nodes", values.len()))
        };
        report.check("boundary values", outcome);
    }
    if let Some(values) = &config.initial_internal {
        let outcome = if values.len() == m {
            Ok(((), format!("{m} values")))
        } else {
            Err(format!("{} values for {m} internal nodes", values.len()))
        };
        report.check("initial values", outcome);
    }
    if let Some(p) = config.p {
        let outcome = if (0.0..=1.0).contains(&p) {
            Ok(((), format!("p = {p}")))
        } else {
            Err(format!("p = {p} is outside [0, 1]"))
        };
        report.check("polling probability", outcome);
    }
    match config.mode {
        Mode::GossipPairwise => check_pairs(&config, &graph, &labels, report),
        Mode::Periodic => check_schedule(
            config.schedule_path.as_deref().expect("checked"),
            Some(k),
            report,
        ),
        Mode::Attack => check_scenario(
            config.scenario_path.as_deref().expect("checked"),
            Some(&graph),
            report,
        ),
        Mode::Steer => {
            let label = config.tracked.as_deref().expect("checked");
            let outcome = match labels.index_of(label) {
                _ if k != 1 => Err(format!(
                    "steering needs one boundary node, the graph has {k}"
                )),
                Some(n) if n >= k => Ok(((), format!("{label:?} is internal"))),
                Some(_) => Err(format!("{label:?} is a boundary node")),
                None => Err(format!("{label:?} is not in the graph")),
            };
            report.check("tracked node", outcome);
        }
        Mode::Limit | Mode::Simulate | Mode::GossipPolling => {}
    }
}

fn check_pairs(config: &RunConfig, graph: &Graph, labels: &NodeLabels, report: &mut Report) {
    let n = graph.num_nodes();
    let k = graph.num_boundary();
    let alpha = config.alpha.expect("checked");
    let dist = match &config.pairs {
        None => PairDistribution::uniform(n, alpha).map_err(|e| e.to_string()),
        Some(specs) => specs
            .iter()
            .map(|s| {
                let index = |l: &str| {
                    labels
                        .index_of(l)
                        .ok_or_else(|| format!("pair node {l:?} is not in the graph"))
                };
                Ok((index(&s.i)?, index(&s.j)?, s.prob))
            })
            .collect::<Result<Vec<_>, String>>()
            .and_then(|pairs| pairs_with_shared_alpha(n, &pairs, alpha).map_err(|e| e.to_string())),
    };
    let Some(dist) = report.check(
        "pair distribution",
        dist.map(|d| {
            let detail = format!(
                "{} pairs, probabilities sum to 1, alpha {alpha}",
                d.pairs().len()
            );
            (d, detail)
        }),
    ) else {
        return;
    };
    let outcome = if dist.has_boundary_interaction(k) {
        Ok((
            (),
            "some pair joins a boundary node to an internal node".to_string(),
        ))
    } else {
        Err(
            "no pair with positive probability joins a boundary node to an internal node"
                .to_string(),
        )
    };
    report.check("pair boundary interaction", outcome);
}
