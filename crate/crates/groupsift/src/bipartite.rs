//! User–object interaction graph: ingestion, label loading and
//! high-degree pruning.
//!
//! Edges point from users to objects. Every edge carries the user plus a
//! fixed-arity tuple of quantized attribute buckets; edges that collapse
//! to the same (user, attrs) key on the same object are deduplicated, so
//! the incoming edge set of an object is a true set of keys.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

/// Dense 0-based user identifier assigned at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UserId(pub u32);

/// Dense 0-based object identifier assigned at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjectId(pub u32);

impl UserId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ObjectId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Options controlling edge-file parsing.
#[derive(Debug, Clone)]
pub struct IngestOptions {
    /// Column separator; defaults to TAB.
    pub delimiter: char,
    /// Bucket width per attribute column, in column order. The attribute
    /// arity of the graph equals the length of this list. A raw value `v`
    /// maps to bucket `floor(v / width)`.
    pub attr_widths: Vec<f64>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            delimiter: '\t',
            attr_widths: Vec::new(),
        }
    }
}

/// Outcome of loading a label file.
#[derive(Debug, Default)]
pub struct LabelSummary {
    pub matched: usize,
    /// Keys in the file that name no ingested user. Reported, not fatal.
    pub unknown: Vec<String>,
}

/// Cutoff for [`BipartiteGraph::prune_popular`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PruneCutoff {
    /// Remove objects with in-degree strictly above this value.
    Absolute(u32),
    /// Remove objects with in-degree strictly above the empirical
    /// `q`-quantile of the in-degree list, `q` in (0, 1].
    Quantile(f64),
}

/// Immutable bipartite interaction graph.
///
/// Construction goes through [`GraphBuilder`] or [`BipartiteGraph::ingest_edges`];
/// after that the graph is read-only and safe to share across threads.
#[derive(Debug, Clone)]
pub struct BipartiteGraph {
    user_names: Vec<String>,
    object_names: Vec<String>,
    user_index: HashMap<String, u32>,
    object_index: HashMap<String, u32>,
    attr_arity: usize,

    // Distinct (user, attrs) keys, each with its sorted object list (CSR).
    key_user: Vec<u32>,
    key_attrs: Vec<i64>, // flattened, attr_arity entries per key
    key_obj_start: Vec<usize>,
    key_objs: Vec<u32>,

    // CSR object -> incoming key ids (the set I_j), sorted.
    obj_key_start: Vec<usize>,
    obj_keys: Vec<u32>,

    // CSR user -> distinct objects, sorted.
    user_obj_start: Vec<usize>,
    user_objs: Vec<u32>,

    // CSR object -> distinct users, sorted.
    obj_user_start: Vec<usize>,
    obj_users: Vec<u32>,

    labeled: Vec<bool>,
}

/// Accumulates raw edges and builds a deduplicated [`BipartiteGraph`].
pub struct GraphBuilder {
    attr_arity: usize,
    user_names: Vec<String>,
    object_names: Vec<String>,
    user_index: HashMap<String, u32>,
    object_index: HashMap<String, u32>,
    // One row per raw edge: (user, object, offset into attr_buf).
    rows: Vec<(u32, u32, u32)>,
    attr_buf: Vec<i64>,
}

impl GraphBuilder {
    pub fn new(attr_arity: usize) -> Self {
        GraphBuilder {
            attr_arity,
            user_names: Vec::new(),
            object_names: Vec::new(),
            user_index: HashMap::new(),
            object_index: HashMap::new(),
            rows: Vec::new(),
            attr_buf: Vec::new(),
        }
    }

    pub fn attr_arity(&self) -> usize {
        self.attr_arity
    }

    /// Registers a user key without adding edges, returning its id.
    pub fn intern_user(&mut self, key: &str) -> UserId {
        UserId(intern(&mut self.user_index, &mut self.user_names, key))
    }

    /// Registers an object key without adding edges, returning its id.
    pub fn intern_object(&mut self, key: &str) -> ObjectId {
        ObjectId(intern(&mut self.object_index, &mut self.object_names, key))
    }

    pub fn contains_user(&self, key: &str) -> bool {
        self.user_index.contains_key(key)
    }

    pub fn contains_object(&self, key: &str) -> bool {
        self.object_index.contains_key(key)
    }

    /// Adds one raw edge. `attrs` are already-quantized buckets and must
    /// match the builder arity.
    pub fn add_edge(&mut self, user: &str, object: &str, attrs: &[i64]) {
        assert_eq!(attrs.len(), self.attr_arity, "attribute arity mismatch");
        let u = self.intern_user(user).0;
        let o = self.intern_object(object).0;
        self.add_edge_ids(u, o, attrs);
    }

    /// Adds one raw edge for ids already interned via this builder.
    pub fn add_edge_ids(&mut self, user: u32, object: u32, attrs: &[i64]) {
        assert_eq!(attrs.len(), self.attr_arity, "attribute arity mismatch");
        debug_assert!((user as usize) < self.user_names.len());
        debug_assert!((object as usize) < self.object_names.len());
        let off = self.attr_buf.len() as u32;
        self.attr_buf.extend_from_slice(attrs);
        self.rows.push((user, object, off));
    }

    pub fn build(self) -> BipartiteGraph {
        let GraphBuilder {
            attr_arity,
            user_names,
            object_names,
            user_index,
            object_index,
            mut rows,
            attr_buf,
        } = self;

        let arity = attr_arity;
        let attrs_of = |off: u32| -> &[i64] { &attr_buf[off as usize..off as usize + arity] };

        // Sort rows by (user, attrs, object) and drop exact duplicates, so
        // every surviving row is one distinct (key, object) pair and keys
        // form contiguous runs.
        rows.sort_unstable_by(|a, b| {
            a.0.cmp(&b.0)
                .then_with(|| attrs_of(a.2).cmp(attrs_of(b.2)))
                .then_with(|| a.1.cmp(&b.1))
        });
        rows.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1 && attrs_of(a.2) == attrs_of(b.2));

        let num_objects = object_names.len();
        let num_users = user_names.len();

        let mut key_user = Vec::new();
        let mut key_attrs = Vec::new();
        let mut key_obj_start = vec![0usize];
        let mut key_objs = Vec::with_capacity(rows.len());

        let mut i = 0;
        while i < rows.len() {
            let (user, _, off) = rows[i];
            let attrs = attrs_of(off);
            key_user.push(user);
            key_attrs.extend_from_slice(attrs);
            while i < rows.len() && rows[i].0 == user && attrs_of(rows[i].2) == attrs {
                key_objs.push(rows[i].1);
                i += 1;
            }
            key_obj_start.push(key_objs.len());
        }

        // Invert to object -> keys. Key ids are visited in ascending order,
        // so each object's key list comes out sorted.
        let num_keys = key_user.len();
        let mut obj_deg = vec![0usize; num_objects];
        for &o in &key_objs {
            obj_deg[o as usize] += 1;
        }
        let mut obj_key_start = vec![0usize; num_objects + 1];
        for j in 0..num_objects {
            obj_key_start[j + 1] = obj_key_start[j] + obj_deg[j];
        }
        let mut obj_keys = vec![0u32; key_objs.len()];
        let mut fill = obj_key_start.clone();
        for k in 0..num_keys {
            for &obj in &key_objs[key_obj_start[k]..key_obj_start[k + 1]] {
                let o = obj as usize;
                obj_keys[fill[o]] = k as u32;
                fill[o] += 1;
            }
        }

        // Distinct (user, object) pairs for both directions.
        let mut pairs: Vec<(u32, u32)> = rows.iter().map(|&(u, o, _)| (u, o)).collect();
        pairs.sort_unstable();
        pairs.dedup();

        let mut user_obj_start = vec![0usize; num_users + 1];
        for &(u, _) in &pairs {
            user_obj_start[u as usize + 1] += 1;
        }
        for u in 0..num_users {
            user_obj_start[u + 1] += user_obj_start[u];
        }
        let user_objs: Vec<u32> = pairs.iter().map(|&(_, o)| o).collect();

        let mut by_obj: Vec<(u32, u32)> = pairs.iter().map(|&(u, o)| (o, u)).collect();
        by_obj.sort_unstable();
        let mut obj_user_start = vec![0usize; num_objects + 1];
        for &(o, _) in &by_obj {
            obj_user_start[o as usize + 1] += 1;
        }
        for j in 0..num_objects {
            obj_user_start[j + 1] += obj_user_start[j];
        }
        let obj_users: Vec<u32> = by_obj.iter().map(|&(_, u)| u).collect();

        BipartiteGraph {
            labeled: vec![false; num_users],
            user_names,
            object_names,
            user_index,
            object_index,
            attr_arity,
            key_user,
            key_attrs,
            key_obj_start,
            key_objs,
            obj_key_start,
            obj_keys,
            user_obj_start,
            user_objs,
            obj_user_start,
            obj_users,
        }
    }
}

fn intern(index: &mut HashMap<String, u32>, names: &mut Vec<String>, key: &str) -> u32 {
    if let Some(&id) = index.get(key) {
        return id;
    }
    let id = names.len() as u32;
    names.push(key.to_string());
    index.insert(key.to_string(), id);
    id
}

impl BipartiteGraph {
    /// Parses a delimiter-separated edge file. Each data line is
    /// `user_key <delim> object_key [<delim> attr ...]`; `#` lines and
    /// blank lines are skipped. Attribute values are quantized into
    /// integer buckets of the configured widths.
    pub fn ingest_edges(path: impl AsRef<Path>, opts: &IngestOptions) -> Result<BipartiteGraph> {
        let path = path.as_ref();
        for (i, &w) in opts.attr_widths.iter().enumerate() {
            if w <= 0.0 || !w.is_finite() {
                return Err(Error::invalid(format!(
                    "bucket width for attribute {} must be positive, got {}",
                    i, w
                )));
            }
        }
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let arity = opts.attr_widths.len();
        let mut builder = GraphBuilder::new(arity);
        let mut attrs = vec![0i64; arity];
        let mut data_rows = 0usize;

        for (lineno, line) in reader.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line.map_err(|e| Error::io(path, e))?;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut fields = trimmed.split(opts.delimiter);
            let user = fields.next().unwrap_or("");
            let object = fields.next().unwrap_or("");
            if user.is_empty() || object.is_empty() {
                return Err(malformed(path, lineno, "expected user and object keys"));
            }
            for (i, width) in opts.attr_widths.iter().enumerate() {
                let raw = fields.next().ok_or_else(|| {
                    malformed(
                        path,
                        lineno,
                        format!("expected {} attribute column(s)", arity),
                    )
                })?;
                let value: f64 = raw.trim().parse().map_err(|_| {
                    malformed(path, lineno, format!("unparsable attribute {:?}", raw))
                })?;
                if !value.is_finite() {
                    return Err(malformed(path, lineno, "non-finite attribute"));
                }
                attrs[i] = (value / width).floor() as i64;
            }
            if fields.next().is_some() {
                return Err(malformed(
                    path,
                    lineno,
                    format!("expected exactly {} column(s)", 2 + arity),
                ));
            }
            builder.add_edge(user, object, &attrs);
            data_rows += 1;
        }
        if data_rows == 0 {
            return Err(Error::invalid(format!(
                "edge file {} contains no edges",
                path.display()
            )));
        }
        Ok(builder.build())
    }

    /// Loads a label file (one user key per line, `#` comments allowed)
    /// and marks the named users as labeled. Unknown keys are collected
    /// in the summary and logged, never fatal.
    pub fn load_labels(&mut self, path: impl AsRef<Path>) -> Result<LabelSummary> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let mut summary = LabelSummary::default();
        for line in reader.lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let key = line.trim();
            if key.is_empty() || key.starts_with('#') {
                continue;
            }
            match self.user_index.get(key) {
                Some(&id) => {
                    if !self.labeled[id as usize] {
                        self.labeled[id as usize] = true;
                        summary.matched += 1;
                    }
                }
                None => summary.unknown.push(key.to_string()),
            }
        }
        if !summary.unknown.is_empty() {
            log::warn!(
                "{}: {} label key(s) match no ingested user",
                path.display(),
                summary.unknown.len()
            );
        }
        Ok(summary)
    }

    /// Marks the given users as labeled, replacing any previous labeling.
    pub fn set_labeled_users(&mut self, users: impl IntoIterator<Item = UserId>) {
        self.labeled.iter_mut().for_each(|l| *l = false);
        for u in users {
            self.labeled[u.index()] = true;
        }
    }

    /// Removes objects whose in-degree exceeds the cutoff, along with
    /// their incoming edges. Users are all retained with stable ids.
    /// Returns the pruned graph and the removed object keys.
    pub fn prune_popular(&self, cutoff: PruneCutoff) -> Result<(BipartiteGraph, Vec<String>)> {
        let threshold = match cutoff {
            PruneCutoff::Absolute(a) => {
                if a == 0 {
                    return Err(Error::invalid("absolute prune cutoff must be >= 1"));
                }
                a
            }
            PruneCutoff::Quantile(q) => {
                if !(q > 0.0 && q <= 1.0) {
                    return Err(Error::invalid(format!(
                        "prune quantile must be in (0, 1], got {}",
                        q
                    )));
                }
                let mut degrees: Vec<u32> = (0..self.num_objects())
                    .map(|j| self.in_degree(ObjectId(j as u32)))
                    .collect();
                if degrees.is_empty() {
                    return Err(Error::invalid("cannot prune an object-free graph"));
                }
                degrees.sort_unstable();
                let idx = ((q * degrees.len() as f64).ceil() as usize).clamp(1, degrees.len()) - 1;
                degrees[idx]
            }
        };

        let keep: Vec<bool> = (0..self.num_objects())
            .map(|j| self.in_degree(ObjectId(j as u32)) <= threshold)
            .collect();
        let removed: Vec<String> = (0..self.num_objects())
            .filter(|&j| !keep[j])
            .map(|j| self.object_names[j].clone())
            .collect();
        if !removed.is_empty() && removed.len() == self.num_objects() {
            return Err(Error::invalid(format!(
                "prune cutoff {} would remove every object",
                threshold
            )));
        }

        let mut builder = GraphBuilder::new(self.attr_arity);
        for name in &self.user_names {
            builder.intern_user(name);
        }
        for (j, name) in self.object_names.iter().enumerate() {
            if keep[j] {
                builder.intern_object(name);
            }
        }
        for k in 0..self.num_keys() {
            let user = self.key_user[k];
            let attrs = &self.key_attrs[k * self.attr_arity..(k + 1) * self.attr_arity];
            for idx in self.key_obj_start[k]..self.key_obj_start[k + 1] {
                let o = self.key_objs[idx] as usize;
                if keep[o] {
                    let new_o = builder.intern_object(&self.object_names[o]).0;
                    builder.add_edge_ids(user, new_o, attrs);
                }
            }
        }
        let mut pruned = builder.build();
        pruned.labeled.copy_from_slice(&self.labeled);
        Ok((pruned, removed))
    }

    pub fn num_users(&self) -> usize {
        self.user_names.len()
    }

    pub fn num_objects(&self) -> usize {
        self.object_names.len()
    }

    pub fn attr_arity(&self) -> usize {
        self.attr_arity
    }

    /// Number of distinct (key, object) pairs, i.e. deduplicated edges.
    pub fn num_edges(&self) -> usize {
        self.key_objs.len()
    }

    pub(crate) fn num_keys(&self) -> usize {
        self.key_user.len()
    }

    /// In-degree of an object: the size of its incoming key set.
    pub fn in_degree(&self, object: ObjectId) -> u32 {
        (self.obj_key_start[object.index() + 1] - self.obj_key_start[object.index()]) as u32
    }

    /// The incoming key ids of an object, sorted ascending.
    pub(crate) fn incoming_keys(&self, object: ObjectId) -> &[u32] {
        &self.obj_keys[self.obj_key_start[object.index()]..self.obj_key_start[object.index() + 1]]
    }

    pub(crate) fn key_user_of(&self, key: u32) -> u32 {
        self.key_user[key as usize]
    }

    /// Sorted object list of one ingest key.
    pub(crate) fn key_objects(&self, key: u32) -> &[u32] {
        &self.key_objs[self.key_obj_start[key as usize]..self.key_obj_start[key as usize + 1]]
    }

    /// Distinct objects a user interacts with, sorted ascending.
    pub fn user_objects(&self, user: UserId) -> &[u32] {
        &self.user_objs[self.user_obj_start[user.index()]..self.user_obj_start[user.index() + 1]]
    }

    /// Distinct users pointing at an object, sorted ascending.
    pub fn object_users(&self, object: ObjectId) -> &[u32] {
        &self.obj_users
            [self.obj_user_start[object.index()]..self.obj_user_start[object.index() + 1]]
    }

    pub fn is_labeled(&self, user: UserId) -> bool {
        self.labeled[user.index()]
    }

    pub fn labeled_user_count(&self) -> usize {
        self.labeled.iter().filter(|&&l| l).count()
    }

    pub fn user_name(&self, user: UserId) -> &str {
        &self.user_names[user.index()]
    }

    pub fn object_name(&self, object: ObjectId) -> &str {
        &self.object_names[object.index()]
    }

    pub fn user_id(&self, key: &str) -> Option<UserId> {
        self.user_index.get(key).map(|&id| UserId(id))
    }

    pub fn object_id(&self, key: &str) -> Option<ObjectId> {
        self.object_index.get(key).map(|&id| ObjectId(id))
    }

    /// Maximum number of distinct objects any single user touches.
    pub fn max_user_degree(&self) -> usize {
        (0..self.num_users())
            .map(|u| self.user_obj_start[u + 1] - self.user_obj_start[u])
            .max()
            .unwrap_or(0)
    }

    /// Iterates deduplicated edges as (user, object, attr buckets).
    pub fn edges(&self) -> impl Iterator<Item = (UserId, ObjectId, &[i64])> + '_ {
        (0..self.num_keys()).flat_map(move |k| {
            let user = UserId(self.key_user[k]);
            let attrs = &self.key_attrs[k * self.attr_arity..(k + 1) * self.attr_arity];
            self.key_objects(k as u32)
                .iter()
                .map(move |&o| (user, ObjectId(o), attrs))
        })
    }
}

fn malformed(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}
