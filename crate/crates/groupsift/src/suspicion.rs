//! Group scoring, ranking and fraud-user extraction.
//!
//! A group's score is the mean edge weight over ordered intra-group
//! pairs times the mean raw overlap times the group size. Every
//! undirected intra-group edge therefore contributes in both
//! orientations; absent pairs contribute zero; singletons score zero.

use rayon::prelude::*;

use crate::bipartite::{BipartiteGraph, ObjectId};
use crate::error::{Error, Result};
use crate::labelprop::Partition;
use crate::osg::Osg;

/// One candidate group with scores and, once extraction ran, its users.
#[derive(Debug, Clone)]
pub struct GroupReport {
    /// Index into the partition's group list.
    pub group_id: u32,
    /// Member object ids, ascending.
    pub members: Vec<u32>,
    /// Total suspiciousness, `f1 * f2 * |members|`.
    pub f: f64,
    /// Mean edge weight over ordered intra-group pairs.
    pub f1: f64,
    /// Mean raw overlap over ordered intra-group pairs.
    pub f2: f64,
    /// Present intra-group ordered pairs over all ordered pairs.
    pub edge_density: f64,
    /// Extracted user ids, ascending; empty until extraction runs.
    pub users: Vec<u32>,
}

impl GroupReport {
    /// Score inherited by every member object and extracted user.
    pub fn entity_score(&self) -> f64 {
        self.f
    }
}

/// Options for [`rank_groups`].
#[derive(Debug, Clone)]
pub struct RankOptions {
    /// Extract users for only the strongest `top_k` groups; `None` = all.
    pub top_k: Option<usize>,
    /// Drop extracted users touching fewer than this many group members.
    pub min_outdeg: u32,
    pub workers: usize,
}

impl Default for RankOptions {
    fn default() -> Self {
        RankOptions {
            top_k: None,
            min_outdeg: 3,
            workers: 1,
        }
    }
}

/// Scores one member list. Fails on duplicate or out-of-range members.
pub fn score_group(osg: &Osg, members: &[u32]) -> Result<GroupReport> {
    let n = osg.num_objects();
    let mut in_group = vec![false; n];
    for &m in members {
        if m as usize >= n {
            return Err(Error::invalid(format!("object id {} out of range", m)));
        }
        if in_group[m as usize] {
            return Err(Error::invalid(format!("duplicate member id {}", m)));
        }
        in_group[m as usize] = true;
    }
    if members.is_empty() {
        return Err(Error::invalid("empty member list"));
    }

    let mut report = GroupReport {
        group_id: 0,
        members: {
            let mut m = members.to_vec();
            m.sort_unstable();
            m
        },
        f: 0.0,
        f1: 0.0,
        f2: 0.0,
        edge_density: 0.0,
        users: Vec::new(),
    };
    let size = members.len();
    if size == 1 {
        return Ok(report);
    }

    let mut sum_c = 0.0f64;
    let mut sum_overlap = 0.0f64;
    let mut ordered_pairs = 0u64;
    for &m in &report.members {
        for (nbr, edge) in osg.neighbor_edges(ObjectId(m)) {
            if in_group[nbr.index()] {
                sum_c += edge.c;
                sum_overlap += edge.overlap as f64;
                ordered_pairs += 1;
            }
        }
    }
    let denom = (size * (size - 1)) as f64;
    report.f1 = sum_c / denom;
    report.f2 = sum_overlap / denom;
    report.f = report.f1 * report.f2 * size as f64;
    report.edge_density = ordered_pairs as f64 / denom;
    Ok(report)
}

/// Users with edges to at least two group members, minus those whose
/// out-degree into the group is below `min_outdeg`. Equivalent to the
/// union of pairwise user-set intersections, computed in one pass over
/// the edges incident to the group.
pub fn extract_users(graph: &BipartiteGraph, members: &[u32], min_outdeg: u32) -> Vec<u32> {
    let mut count = vec![0u32; graph.num_users()];
    let mut touched = Vec::new();
    for &m in members {
        for &u in graph.object_users(ObjectId(m)) {
            if count[u as usize] == 0 {
                touched.push(u);
            }
            count[u as usize] += 1;
        }
    }
    let threshold = min_outdeg.max(2);
    let mut users: Vec<u32> = touched
        .into_iter()
        .filter(|&u| count[u as usize] >= threshold)
        .collect();
    users.sort_unstable();
    users
}

/// Scores every group of the partition, sorts by descending score with
/// deterministic tie-breaks (larger group, then smaller first member),
/// and extracts users for the leading groups.
pub fn rank_groups(
    osg: &Osg,
    graph: &BipartiteGraph,
    partition: &Partition,
    opts: &RankOptions,
) -> Result<Vec<GroupReport>> {
    let score_one = |(gi, members): (usize, &Vec<u32>)| {
        score_group(osg, members).map(|mut r| {
            r.group_id = gi as u32;
            r
        })
    };

    let mut reports: Vec<GroupReport> = if opts.workers > 1 && partition.groups.len() > 64 {
        partition
            .groups
            .par_iter()
            .enumerate()
            .map(score_one)
            .collect::<Result<_>>()?
    } else {
        partition
            .groups
            .iter()
            .enumerate()
            .map(score_one)
            .collect::<Result<_>>()?
    };

    reports.sort_unstable_by(|x, y| {
        y.f.total_cmp(&x.f)
            .then_with(|| y.members.len().cmp(&x.members.len()))
            .then_with(|| x.members[0].cmp(&y.members[0]))
    });

    let extract_until = opts.top_k.unwrap_or(reports.len()).min(reports.len());
    if opts.workers > 1 && extract_until > 64 {
        reports[..extract_until]
            .par_iter_mut()
            .for_each(|r| r.users = extract_users(graph, &r.members, opts.min_outdeg));
    } else {
        for r in reports[..extract_until].iter_mut() {
            r.users = extract_users(graph, &r.members, opts.min_outdeg);
        }
    }
    Ok(reports)
}
