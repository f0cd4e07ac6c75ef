//! Clustering of the similarity graph by synchronous, color-partitioned
//! label propagation with selectable neighbor-aggregation criteria.
//!
//! Every node starts with its own id as label. Nodes of one color class
//! share no edges, so a whole class updates in one step against the
//! shared label array; classes are applied in ascending color order
//! within an iteration. Propagation stops once an iteration changes no
//! label other than through ties, or at the iteration cap.

use rayon::prelude::*;

use crate::bipartite::ObjectId;
use crate::osg::Osg;

/// Proper vertex coloring of the similarity graph.
#[derive(Debug, Clone)]
pub struct Coloring {
    pub color: Vec<u32>,
    pub num_colors: u32,
}

/// Neighbor-aggregation rule deciding a node's next label. For each
/// candidate label the criterion scores the neighbors carrying it; the
/// label with the highest score wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateCriterion {
    /// Unweighted neighbor count.
    Lpa,
    /// Sum of edge weights.
    Sum,
    /// Maximum edge weight.
    Max,
    /// Sum of the K strongest edge weights (all of them when a label has
    /// fewer than K, unless strict mode zeroes such labels out).
    TopK(usize),
}

impl std::fmt::Display for UpdateCriterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            UpdateCriterion::Lpa => write!(f, "lpa"),
            UpdateCriterion::Sum => write!(f, "sum"),
            UpdateCriterion::Max => write!(f, "max"),
            UpdateCriterion::TopK(k) => write!(f, "topk{}", k),
        }
    }
}

/// Options for [`propagate`].
#[derive(Debug, Clone)]
pub struct PropagateOptions {
    /// Iteration cap; `None` means `min(|edges|, 100)`, floored at 1.
    pub max_iters: Option<usize>,
    /// Worker threads for in-class updates. 1 = sequential reference.
    pub workers: usize,
    /// Zero out labels backed by fewer than K edges instead of summing
    /// what is there.
    pub strict_topk: bool,
    /// Record the monochromatic-edge count after every iteration.
    pub trace_monochromatic: bool,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        PropagateOptions {
            max_iters: None,
            workers: 1,
            strict_topk: false,
            trace_monochromatic: false,
        }
    }
}

/// Final labeling with groups extracted by shared label.
#[derive(Debug, Clone)]
pub struct Partition {
    /// Final label per object; the label space is object ids.
    pub labels: Vec<u32>,
    /// Member lists, one per distinct final label, ordered by descending
    /// size then ascending smallest member; members ascend within a group.
    pub groups: Vec<Vec<u32>>,
    /// Group index per object, aligned with `groups`.
    pub group_of: Vec<u32>,
    pub iterations_run: usize,
    pub converged: bool,
    /// Label changes that happened through tie-breaks.
    pub tie_events: u64,
    /// Monochromatic-edge count after each iteration, when traced.
    pub monochromatic_history: Vec<u64>,
}

/// Result of one label decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabelUpdate {
    pub label: u32,
    /// True when the label changed and several labels tied for the top
    /// score.
    pub tie: bool,
}

/// Sequential greedy coloring: nodes in ascending id take the smallest
/// color unused by already-colored neighbors. Deterministic and proper;
/// uses at most `max_degree + 1` colors.
pub fn greedy_color(osg: &Osg) -> Coloring {
    let n = osg.num_objects();
    let mut color = vec![u32::MAX; n];
    let mut used_at = vec![u32::MAX; 1]; // per color: last node that used it
    let mut num_colors = 0u32;
    for node in 0..n {
        for (nbr, _) in osg.neighbors(ObjectId(node as u32)) {
            let c = color[nbr.index()];
            if c != u32::MAX {
                if c as usize >= used_at.len() {
                    used_at.resize(c as usize + 1, u32::MAX);
                }
                used_at[c as usize] = node as u32;
            }
        }
        let mut pick = 0u32;
        while (pick as usize) < used_at.len() && used_at[pick as usize] == node as u32 {
            pick += 1;
        }
        if pick as usize >= used_at.len() {
            used_at.resize(pick as usize + 1, u32::MAX);
        }
        color[node] = pick;
        num_colors = num_colors.max(pick + 1);
    }
    if n == 0 {
        num_colors = 0;
    }
    Coloring { color, num_colors }
}

/// Per-thread accumulation state, stamped so it needs no clearing
/// between nodes.
struct Scratch {
    epoch: u64,
    stamp: Vec<u64>,
    acc: Vec<f64>,
    top: Vec<Vec<f64>>, // ascending, at most K entries
    touched: Vec<u32>,
}

impl Scratch {
    fn new(num_labels: usize) -> Self {
        Scratch {
            epoch: 0,
            stamp: vec![0; num_labels],
            acc: vec![0.0; num_labels],
            top: vec![Vec::new(); num_labels],
            touched: Vec::new(),
        }
    }
}

fn decide(
    osg: &Osg,
    labels: &[u32],
    node: u32,
    criterion: UpdateCriterion,
    strict_topk: bool,
    scratch: &mut Scratch,
) -> LabelUpdate {
    let current = labels[node as usize];
    scratch.epoch += 1;
    scratch.touched.clear();
    let epoch = scratch.epoch;

    for (nbr, c) in osg.neighbors(ObjectId(node)) {
        let l = labels[nbr.index()] as usize;
        if scratch.stamp[l] != epoch {
            scratch.stamp[l] = epoch;
            scratch.touched.push(l as u32);
            match criterion {
                UpdateCriterion::Lpa => scratch.acc[l] = 1.0,
                UpdateCriterion::Sum => scratch.acc[l] = c,
                UpdateCriterion::Max => scratch.acc[l] = c,
                UpdateCriterion::TopK(_) => {
                    scratch.top[l].clear();
                    scratch.top[l].push(c);
                }
            }
        } else {
            match criterion {
                UpdateCriterion::Lpa => scratch.acc[l] += 1.0,
                UpdateCriterion::Sum => scratch.acc[l] += c,
                UpdateCriterion::Max => {
                    if c > scratch.acc[l] {
                        scratch.acc[l] = c;
                    }
                }
                UpdateCriterion::TopK(k) => {
                    let top = &mut scratch.top[l];
                    if top.len() < k {
                        let pos = top.partition_point(|&v| v < c);
                        top.insert(pos, c);
                    } else if k > 0 && c > top[0] {
                        top.remove(0);
                        let pos = top.partition_point(|&v| v < c);
                        top.insert(pos, c);
                    }
                }
            }
        }
    }

    if scratch.touched.is_empty() {
        return LabelUpdate {
            label: current,
            tie: false,
        };
    }

    // Resolve top-k buckets into plain scores; sum in ascending order so
    // the result is independent of neighbor visit order.
    if let UpdateCriterion::TopK(k) = criterion {
        for &l in &scratch.touched {
            let top = &scratch.top[l as usize];
            scratch.acc[l as usize] = if strict_topk && top.len() < k {
                0.0
            } else {
                top.iter().sum()
            };
        }
    }

    let mut best_h = f64::NEG_INFINITY;
    let mut best_label = u32::MAX;
    let mut best_count = 0usize;
    for &l in &scratch.touched {
        let h = scratch.acc[l as usize];
        if h > best_h {
            best_h = h;
            best_label = l;
            best_count = 1;
        } else if h == best_h {
            best_count += 1;
            if l < best_label {
                best_label = l;
            }
        }
    }

    let current_attains =
        scratch.stamp[current as usize] == epoch && scratch.acc[current as usize] == best_h;
    if current_attains {
        LabelUpdate {
            label: current,
            tie: false,
        }
    } else {
        LabelUpdate {
            label: best_label,
            tie: best_count > 1,
        }
    }
}

/// Scores `node`'s neighbor labels under `criterion` and returns the
/// winning label, keeping the current label on a tied maximum and
/// otherwise breaking ties toward the smallest label id. Nodes without
/// neighbors keep their label.
pub fn update_label(
    osg: &Osg,
    labels: &[u32],
    node: ObjectId,
    criterion: UpdateCriterion,
    strict_topk: bool,
) -> LabelUpdate {
    let mut scratch = Scratch::new(label_space(labels));
    decide(osg, labels, node.0, criterion, strict_topk, &mut scratch)
}

fn label_space(labels: &[u32]) -> usize {
    labels.iter().copied().max().map_or(0, |m| m as usize + 1)
}

/// Runs label propagation to a fixed point (or the iteration cap) and
/// extracts groups of equal final label.
pub fn propagate(osg: &Osg, criterion: UpdateCriterion, opts: &PropagateOptions) -> Partition {
    let n = osg.num_objects();
    let mut labels: Vec<u32> = (0..n as u32).collect();
    let coloring = greedy_color(osg);

    let mut classes: Vec<Vec<u32>> = vec![Vec::new(); coloring.num_colors as usize];
    for node in 0..n {
        classes[coloring.color[node] as usize].push(node as u32);
    }

    let cap = opts
        .max_iters
        .unwrap_or_else(|| osg.num_edges().min(100))
        .max(1);

    let mut iterations_run = 0usize;
    let mut converged = false;
    let mut tie_events = 0u64;
    let mut mono_history = Vec::new();
    let mut decisions: Vec<LabelUpdate> = Vec::new();

    for _ in 0..cap {
        iterations_run += 1;
        let mut non_tie_changes = 0u64;
        for class in &classes {
            // No two nodes of one class are adjacent, so all of them can
            // be decided against the same label state.
            if opts.workers > 1 && class.len() > 512 {
                class
                    .par_iter()
                    .map_init(
                        || Scratch::new(n),
                        |scratch, &node| {
                            decide(osg, &labels, node, criterion, opts.strict_topk, scratch)
                        },
                    )
                    .collect_into_vec(&mut decisions);
            } else {
                decisions.clear();
                let mut scratch = Scratch::new(n);
                decisions.extend(class.iter().map(|&node| {
                    decide(
                        osg,
                        &labels,
                        node,
                        criterion,
                        opts.strict_topk,
                        &mut scratch,
                    )
                }));
            }
            for (&node, d) in class.iter().zip(&decisions) {
                if labels[node as usize] != d.label {
                    labels[node as usize] = d.label;
                    if d.tie {
                        tie_events += 1;
                    } else {
                        non_tie_changes += 1;
                    }
                }
            }
        }
        if opts.trace_monochromatic {
            mono_history.push(count_monochromatic(osg, &labels));
        }
        if non_tie_changes == 0 {
            converged = true;
            break;
        }
    }

    let (groups, group_of) = extract_groups(&labels);
    Partition {
        labels,
        groups,
        group_of,
        iterations_run,
        converged,
        tie_events,
        monochromatic_history: mono_history,
    }
}

/// Number of edges whose endpoints share a label.
pub fn count_monochromatic(osg: &Osg, labels: &[u32]) -> u64 {
    osg.edges()
        .iter()
        .filter(|e| labels[e.a.index()] == labels[e.b.index()])
        .count() as u64
}

fn extract_groups(labels: &[u32]) -> (Vec<Vec<u32>>, Vec<u32>) {
    let n = labels.len();
    let mut by_label: std::collections::HashMap<u32, Vec<u32>> = std::collections::HashMap::new();
    for (node, &label) in labels.iter().enumerate() {
        by_label.entry(label).or_default().push(node as u32);
    }
    let mut groups: Vec<Vec<u32>> = by_label.into_values().collect();
    groups.sort_unstable_by(|a, b| b.len().cmp(&a.len()).then_with(|| a[0].cmp(&b[0])));
    let mut group_of = vec![0u32; n];
    for (gi, members) in groups.iter().enumerate() {
        for &m in members {
            group_of[m as usize] = gi as u32;
        }
    }
    (groups, group_of)
}
