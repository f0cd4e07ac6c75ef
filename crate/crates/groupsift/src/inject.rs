//! Synthetic benchmark construction: random bipartite backgrounds plus
//! planted fraud groups with configurable synchrony and camouflage.
//!
//! Planted users and objects are fresh entities, never background ones,
//! so ground truth is unambiguous. All randomness flows from the group
//! seed through separate streams for fraud edges and camouflage edges:
//! changing the camouflage setting leaves the planted edge set
//! bit-identical.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bipartite::{BipartiteGraph, GraphBuilder, ObjectId, UserId};
use crate::error::{Error, Result};

const STREAM_FRAUD: u64 = 0;
const STREAM_CAMOUFLAGE: u64 = 1;
const STREAM_PROFILE: u64 = 3;

/// Camouflage strategy of a planted group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CamouflageKind {
    /// No extra edges.
    None,
    /// Each fraud user adds edges to uniformly chosen normal objects.
    Random,
    /// Each fraud user adds edges to normal objects sampled by in-degree.
    Biased,
    /// Existing normal users (victim pool A) add edges to fraud objects.
    Hijacked,
    /// Existing normal users (victim pool B, disjoint from A) add edges
    /// to fraud objects.
    Reverse,
    /// The four active kinds combined, each at a quarter of the budget.
    Mixed,
}

impl std::str::FromStr for CamouflageKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(CamouflageKind::None),
            "random" => Ok(CamouflageKind::Random),
            "biased" => Ok(CamouflageKind::Biased),
            "hijacked" => Ok(CamouflageKind::Hijacked),
            "reverse" => Ok(CamouflageKind::Reverse),
            "mixed" => Ok(CamouflageKind::Mixed),
            other => Err(Error::invalid(format!("unknown camouflage kind {other:?}"))),
        }
    }
}

impl std::fmt::Display for CamouflageKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            CamouflageKind::None => "none",
            CamouflageKind::Random => "random",
            CamouflageKind::Biased => "biased",
            CamouflageKind::Hijacked => "hijacked",
            CamouflageKind::Reverse => "reverse",
            CamouflageKind::Mixed => "mixed",
        };
        write!(f, "{s}")
    }
}

/// Parameters of one planted group.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InjectionSpec {
    pub n_users: usize,
    pub n_objects: usize,
    /// Synchrony: each fraud user connects to `round(rho * n_objects)`
    /// group objects; in (0, 1].
    pub rho: f64,
    /// Mean camouflage edges per fraud user.
    pub theta: f64,
    pub camouflage: CamouflageKind,
    pub seed: u64,
    /// Jitter per-user fraud edge counts by up to 20% around the mean.
    #[serde(default)]
    pub jitter: bool,
}

impl InjectionSpec {
    /// Fraud edges per user implied by `rho`.
    pub fn edges_per_user(&self) -> usize {
        (self.rho * self.n_objects as f64).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_objects == 0 {
            return Err(Error::invalid("group needs at least one user and object"));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::invalid(format!(
                "rho must be in (0, 1], got {}",
                self.rho
            )));
        }
        if self.edges_per_user() < 1 {
            return Err(Error::invalid(
                "rho * n_objects rounds to zero edges per user",
            ));
        }
        if self.theta < 0.0 || !self.theta.is_finite() {
            return Err(Error::invalid("theta must be a nonnegative finite number"));
        }
        Ok(())
    }
}

/// One planted group's identities inside the injected graph.
#[derive(Debug, Clone)]
pub struct PlantedGroup {
    pub spec: InjectionSpec,
    pub users: Vec<UserId>,
    pub objects: Vec<ObjectId>,
    pub user_keys: Vec<String>,
    pub object_keys: Vec<String>,
}

/// Ground truth over an injected graph. Victim users recruited by the
/// hijacked/reverse kinds stay unlabeled: only fresh planted entities
/// count as fraudulent.
///
/// Ids refer to the graph returned alongside this truth; name lookups
/// survive transformations (pruning) that reassign object ids.
#[derive(Debug, Clone, Default)]
pub struct GroundTruth {
    pub fraud_users: Vec<UserId>,
    pub fraud_objects: Vec<ObjectId>,
    pub groups: Vec<PlantedGroup>,
}

impl GroundTruth {
    pub fn is_fraud_user(&self, u: UserId) -> bool {
        self.fraud_users.binary_search(&u).is_ok()
    }

    pub fn is_fraud_object(&self, o: ObjectId) -> bool {
        self.fraud_objects.binary_search(&o).is_ok()
    }
}

/// Ground truth re-anchored to a specific graph by entity key, so it
/// stays valid after transformations that reassign ids (pruning).
#[derive(Debug, Clone, Default)]
pub struct ResolvedTruth {
    pub fraud_users: Vec<UserId>,
    pub fraud_objects: Vec<ObjectId>,
    /// Object ids per planted group, restricted to surviving objects.
    pub group_objects: Vec<Vec<ObjectId>>,
    pub missing_objects: usize,
}

impl GroundTruth {
    /// Maps this truth onto `graph` via the planted entity keys.
    pub fn resolve(&self, graph: &BipartiteGraph) -> ResolvedTruth {
        let mut out = ResolvedTruth::default();
        for group in &self.groups {
            for key in &group.user_keys {
                if let Some(id) = graph.user_id(key) {
                    out.fraud_users.push(id);
                }
            }
            let mut objects = Vec::with_capacity(group.object_keys.len());
            for key in &group.object_keys {
                match graph.object_id(key) {
                    Some(id) => objects.push(id),
                    None => out.missing_objects += 1,
                }
            }
            out.fraud_objects.extend(objects.iter().copied());
            out.group_objects.push(objects);
        }
        out.fraud_users.sort_unstable();
        out.fraud_objects.sort_unstable();
        out
    }
}

/// Generates a random attribute-free background graph. Object in-degrees
/// follow a Zipf-like law with the given exponent (0 = uniform); edges
/// are distinct (user, object) pairs.
pub fn make_background(
    n_users: usize,
    n_objects: usize,
    n_edges: usize,
    degree_skew: f64,
    seed: u64,
) -> Result<BipartiteGraph> {
    if n_users == 0 || n_objects == 0 {
        return Err(Error::invalid("background needs users and objects"));
    }
    if degree_skew < 0.0 || !degree_skew.is_finite() {
        return Err(Error::invalid("degree skew must be nonnegative"));
    }
    let capacity = n_users
        .checked_mul(n_objects)
        .ok_or_else(|| Error::invalid("background size overflows"))?;
    if n_edges > capacity {
        return Err(Error::invalid(format!(
            "{} edges exceed the {} possible distinct pairs",
            n_edges, capacity
        )));
    }

    let mut builder = GraphBuilder::new(0);
    for u in 0..n_users {
        builder.intern_user(&format!("u{}", u));
    }
    for o in 0..n_objects {
        builder.intern_object(&format!("m{}", o));
    }

    let cum = cumulative_weights((0..n_objects).map(|j| 1.0 / ((j + 1) as f64).powf(degree_skew)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: HashSet<u64> = HashSet::with_capacity(n_edges * 2);
    let mut attempts: usize = 0;
    let max_attempts = n_edges.saturating_mul(100) + 1_000;
    while seen.len() < n_edges {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::invalid(
                "background too dense for rejection sampling; lower n_edges",
            ));
        }
        let o = weighted_index(&cum, &mut rng) as u32;
        let u = rng.gen_range(0..n_users) as u32;
        let pair = ((u as u64) << 32) | o as u64;
        if seen.insert(pair) {
            builder.add_edge_ids(u, o, &[]);
        }
    }
    Ok(builder.build())
}

/// The default desk-scale background profile used across experiments.
pub fn desk_background(seed: u64) -> Result<BipartiteGraph> {
    make_background(10_000, 2_000, 53_000, 1.0, seed)
}

/// Plants a single group; see [`inject_many`].
pub fn inject(
    background: &BipartiteGraph,
    spec: &InjectionSpec,
) -> Result<(BipartiteGraph, GroundTruth)> {
    inject_many(background, std::slice::from_ref(spec))
}

/// Plants disjoint fraud groups into a copy of the background. Fresh
/// users connect to `round(rho * |objects|)` random group objects each;
/// camouflage edges follow the group's kind. Identical inputs produce a
/// bit-identical graph.
pub fn inject_many(
    background: &BipartiteGraph,
    specs: &[InjectionSpec],
) -> Result<(BipartiteGraph, GroundTruth)> {
    if background.attr_arity() != 0 {
        return Err(Error::invalid(
            "injection requires an attribute-free background graph",
        ));
    }
    for spec in specs {
        spec.validate()?;
    }

    let mut builder = GraphBuilder::new(0);
    for u in 0..background.num_users() {
        builder.intern_user(background.user_name(UserId(u as u32)));
    }
    for o in 0..background.num_objects() {
        builder.intern_object(background.object_name(ObjectId(o as u32)));
    }
    for (u, o, _) in background.edges() {
        builder.add_edge_ids(u.0, o.0, &[]);
    }

    let n_normal_users = background.num_users();
    let n_normal_objects = background.num_objects();
    // Victim pools for the hijacked and reverse kinds: fixed disjoint
    // halves of the background user range.
    let pool_split = n_normal_users / 2;
    let degree_cum = cumulative_weights(
        (0..n_normal_objects).map(|j| background.in_degree(ObjectId(j as u32)) as f64),
    );

    let mut truth = GroundTruth::default();

    for (gi, spec) in specs.iter().enumerate() {
        let mut fraud_rng = ChaCha8Rng::seed_from_u64(spec.seed);
        fraud_rng.set_stream(STREAM_FRAUD);
        let mut camo_rng = ChaCha8Rng::seed_from_u64(spec.seed);
        camo_rng.set_stream(STREAM_CAMOUFLAGE);

        let mut users = Vec::with_capacity(spec.n_users);
        let mut user_keys = Vec::with_capacity(spec.n_users);
        for i in 0..spec.n_users {
            let name = format!("fraud_g{}_u{}", gi, i);
            if builder.contains_user(&name) {
                return Err(Error::invalid(format!("user key {name:?} already exists")));
            }
            users.push(builder.intern_user(&name));
            user_keys.push(name);
        }
        let mut objects = Vec::with_capacity(spec.n_objects);
        let mut object_keys = Vec::with_capacity(spec.n_objects);
        for j in 0..spec.n_objects {
            let name = format!("fraud_g{}_m{}", gi, j);
            if builder.contains_object(&name) {
                return Err(Error::invalid(format!(
                    "object key {name:?} already exists"
                )));
            }
            objects.push(builder.intern_object(&name));
            object_keys.push(name);
        }

        // Fraud edges: a fixed per-user count keeps fixtures variance-free;
        // jitter trades that for robustness runs.
        let base_count = spec.edges_per_user();
        let mut scratch: Vec<u32> = objects.iter().map(|o| o.0).collect();
        for &user in &users {
            let count = if spec.jitter {
                let lo = ((base_count as f64 * 0.8).round() as usize).max(1);
                let hi = ((base_count as f64 * 1.2).round() as usize).min(spec.n_objects);
                fraud_rng.gen_range(lo..=hi.max(lo))
            } else {
                base_count
            };
            for i in 0..count {
                let j = fraud_rng.gen_range(i..scratch.len());
                scratch.swap(i, j);
                builder.add_edge_ids(user.0, scratch[i], &[]);
            }
        }

        apply_camouflage(
            &mut builder,
            background,
            spec,
            &users,
            &objects,
            pool_split,
            &degree_cum,
            &mut camo_rng,
        )?;

        truth.fraud_users.extend(users.iter().copied());
        truth.fraud_objects.extend(objects.iter().copied());
        truth.groups.push(PlantedGroup {
            spec: spec.clone(),
            users,
            objects,
            user_keys,
            object_keys,
        });
    }

    truth.fraud_users.sort_unstable();
    truth.fraud_objects.sort_unstable();

    let mut graph = builder.build();
    let labeled: Vec<UserId> = (0..background.num_users() as u32)
        .map(UserId)
        .filter(|&u| background.is_labeled(u))
        .collect();
    graph.set_labeled_users(labeled);
    Ok((graph, truth))
}

#[allow(clippy::too_many_arguments)]
fn apply_camouflage(
    builder: &mut GraphBuilder,
    background: &BipartiteGraph,
    spec: &InjectionSpec,
    users: &[UserId],
    objects: &[ObjectId],
    pool_split: usize,
    degree_cum: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let n_normal_users = background.num_users();
    let per_user = |theta: f64| theta.round() as usize;
    let victim_total = |theta: f64| (theta * spec.n_users as f64).round() as usize;
    let hijack_pool: Vec<u32> = (0..pool_split as u32).collect();
    let reverse_pool: Vec<u32> = (pool_split as u32..n_normal_users as u32).collect();

    match spec.camouflage {
        CamouflageKind::None => Ok(()),
        CamouflageKind::Random => normal_object_camouflage(
            builder,
            background,
            users,
            &[(per_user(spec.theta), false)],
            degree_cum,
            rng,
        ),
        CamouflageKind::Biased => normal_object_camouflage(
            builder,
            background,
            users,
            &[(per_user(spec.theta), true)],
            degree_cum,
            rng,
        ),
        CamouflageKind::Hijacked => victim_camouflage(
            builder,
            &hijack_pool,
            objects,
            victim_total(spec.theta),
            rng,
        ),
        CamouflageKind::Reverse => victim_camouflage(
            builder,
            &reverse_pool,
            objects,
            victim_total(spec.theta),
            rng,
        ),
        CamouflageKind::Mixed => {
            let quarter = spec.theta / 4.0;
            normal_object_camouflage(
                builder,
                background,
                users,
                &[(per_user(quarter), false), (per_user(quarter), true)],
                degree_cum,
                rng,
            )?;
            victim_camouflage(builder, &hijack_pool, objects, victim_total(quarter), rng)?;
            victim_camouflage(builder, &reverse_pool, objects, victim_total(quarter), rng)
        }
    }
}

/// Camouflage edges from each fraud user to distinct normal objects;
/// `passes` lists (count, degree-biased) draws sharing one dedup set.
fn normal_object_camouflage(
    builder: &mut GraphBuilder,
    background: &BipartiteGraph,
    users: &[UserId],
    passes: &[(usize, bool)],
    degree_cum: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let n_normal_objects = background.num_objects();
    let wanted: usize = passes.iter().map(|&(n, _)| n).sum();
    if wanted == 0 {
        return Ok(());
    }
    if wanted > n_normal_objects {
        return Err(Error::invalid(format!(
            "theta {} exceeds the {} normal objects",
            wanted, n_normal_objects
        )));
    }
    if passes.iter().any(|&(n, biased)| biased && n > 0)
        && *degree_cum.last().unwrap_or(&0.0) <= 0.0
    {
        return Err(Error::invalid(
            "biased camouflage needs a background with edges",
        ));
    }
    let mut chosen: HashSet<u32> = HashSet::new();
    for &user in users {
        chosen.clear();
        for &(count, biased) in passes {
            let mut added = 0usize;
            let mut attempts = 0usize;
            while added < count {
                attempts += 1;
                if attempts > count * 200 + 1_000 {
                    return Err(Error::invalid(
                        "camouflage sampling stalled; theta too dense",
                    ));
                }
                let o = if biased {
                    weighted_index(degree_cum, rng) as u32
                } else {
                    rng.gen_range(0..n_normal_objects) as u32
                };
                if chosen.insert(o) {
                    builder.add_edge_ids(user.0, o, &[]);
                    added += 1;
                }
            }
        }
    }
    Ok(())
}

/// Distinct edges from a victim pool of normal users to fraud objects.
fn victim_camouflage(
    builder: &mut GraphBuilder,
    pool: &[u32],
    objects: &[ObjectId],
    total: usize,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    if total == 0 {
        return Ok(());
    }
    if pool.is_empty() {
        return Err(Error::invalid(
            "no normal users available for the victim pool",
        ));
    }
    if total > pool.len() * objects.len() {
        return Err(Error::invalid(format!(
            "{} camouflage edges exceed the {} possible victim pairs",
            total,
            pool.len() * objects.len()
        )));
    }
    let mut seen: HashSet<u64> = HashSet::with_capacity(total * 2);
    let mut attempts = 0usize;
    while seen.len() < total {
        attempts += 1;
        if attempts > total * 200 + 1_000 {
            return Err(Error::invalid(
                "camouflage sampling stalled; theta too dense",
            ));
        }
        let u = pool[rng.gen_range(0..pool.len())];
        let o = objects[rng.gen_range(0..objects.len())].0;
        let pair = ((u as u64) << 32) | o as u64;
        if seen.insert(pair) {
            builder.add_edge_ids(u, o, &[]);
        }
    }
    Ok(())
}

/// The five-group benchmark profile: one clean group plus one group per
/// camouflage kind, synchrony drawn from [0.2, 0.6], camouflage budget
/// tied to the synchrony.
pub fn five_group_specs(base_seed: u64) -> Vec<InjectionSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(STREAM_PROFILE);
    let kinds = [
        CamouflageKind::None,
        CamouflageKind::Random,
        CamouflageKind::Biased,
        CamouflageKind::Hijacked,
        CamouflageKind::Reverse,
    ];
    kinds
        .iter()
        .enumerate()
        .map(|(i, &camouflage)| {
            let n_objects = 50;
            let rho_steps = rng.gen_range(0..=8u32);
            let rho = (20 + 5 * rho_steps) as f64 / 100.0;
            InjectionSpec {
                n_users: 200,
                n_objects,
                rho,
                theta: (n_objects as f64 * rho).round(),
                camouflage,
                seed: base_seed.wrapping_add(1 + i as u64),
                jitter: false,
            }
        })
        .collect()
}

fn cumulative_weights(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut cum = Vec::new();
    let mut total = 0.0;
    for w in weights {
        total += w;
        cum.push(total);
    }
    cum
}

fn weighted_index(cum: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total = *cum.last().expect("nonempty weights");
    let x = rng.gen::<f64>() * total;
    cum.partition_point(|&c| c <= x).min(cum.len() - 1)
}
