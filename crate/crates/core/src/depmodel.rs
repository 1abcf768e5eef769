//! Node tree, typed dependency edges, directory-walk name resolution and
//! peer-set closure.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::registry::{select_version, Manifest, PackumentSource, RegistryError, Requested};
use crate::semver::{satisfies, Version, VersionRange};

/// Name used for the project directory in tree positions.
pub const ROOT_LABEL: &str = "<root>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DepKind {
    Regular,
    Peer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeStatus {
    Valid,
    Invalid,
    Missing,
}

/// Requirement carried by an edge. Unsupported specifiers can never be
/// satisfied.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EdgeReq {
    Range(VersionRange),
    Unsupported(String),
}

impl EdgeReq {
    pub fn accepts(&self, v: &Version) -> bool {
        match self {
            EdgeReq::Range(r) => satisfies(v, r),
            EdgeReq::Unsupported(_) => false,
        }
    }
}

/// Turns a declared specifier into a requirement. Dist-tags are pinned to
/// the version they name in `store`.
pub fn interpret_spec(store: &dyn PackumentSource, name: &str, spec: &str) -> EdgeReq {
    match Requested::parse(name, spec) {
        Ok(Requested::Range(r)) => EdgeReq::Range(r),
        Ok(Requested::Tag(tag)) => match store.packument(name) {
            Ok(p) => match p.dist_tags.get(&tag) {
                Some(v) => EdgeReq::Range(VersionRange::exact(v)),
                None => EdgeReq::Unsupported(spec.to_string()),
            },
            Err(_) => EdgeReq::Unsupported(spec.to_string()),
        },
        Err(_) => EdgeReq::Unsupported(spec.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyEdge {
    pub from: NodeId,
    pub to_name: String,
    pub spec: String,
    pub req: EdgeReq,
    pub kind: DepKind,
    pub optional: bool,
    pub status: EdgeStatus,
    pub resolved: Option<NodeId>,
}

impl DependencyEdge {
    /// Optional peers never take part in resolution.
    pub fn is_active(&self) -> bool {
        !self.optional
    }
}

/// Identifies an edge by its source node and index in `edges_out`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeRef {
    pub from: NodeId,
    pub index: usize,
}

#[derive(Debug, Clone)]
pub struct PackageNode {
    pub id: NodeId,
    pub name: String,
    pub version: Version,
    pub manifest: Arc<Manifest>,
    pub parent: Option<NodeId>,
    pub children: BTreeMap<String, NodeId>,
    pub edges_out: Vec<DependencyEdge>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct TreePosition(pub Vec<String>);

impl fmt::Display for TreePosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.join("/"))
    }
}

/// A status transition reported by revalidation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct EdgeChange {
    pub edge: EdgeRef,
    pub before: EdgeStatus,
    pub after: EdgeStatus,
}

/// Builds the outgoing edges declared by a manifest: regular dependencies
/// then peers, each in name order.
pub fn manifest_edges(manifest: &Manifest, interpret: &dyn Fn(&str, &str) -> EdgeReq) -> Vec<DependencyEdge> {
    let regular = manifest.dependencies.iter().map(|(n, s)| (n, s, DepKind::Regular, false));
    let peers = manifest
        .peer_dependencies
        .iter()
        .map(|(n, s)| (n, s, DepKind::Peer, manifest.is_optional_peer(n)));
    regular
        .chain(peers)
        .map(|(name, spec, kind, optional)| DependencyEdge {
            from: NodeId(usize::MAX),
            to_name: name.clone(),
            spec: spec.clone(),
            req: interpret(name, spec),
            kind,
            optional,
            status: EdgeStatus::Missing,
            resolved: None,
        })
        .collect()
}

/// Arena-backed installation tree. Removed slots stay `None` so ids are
/// never reused within one resolution.
#[derive(Debug, Clone)]
pub struct NodeTree {
    nodes: Vec<Option<PackageNode>>,
    root: NodeId,
}

impl NodeTree {
    pub fn new(root_manifest: Arc<Manifest>, edges: Vec<DependencyEdge>) -> Self {
        let mut tree = NodeTree {
            nodes: Vec::new(),
            root: NodeId(0),
        };
        tree.root = tree.alloc(None, root_manifest, edges);
        tree
    }

    fn alloc(&mut self, parent: Option<NodeId>, manifest: Arc<Manifest>, mut edges: Vec<DependencyEdge>) -> NodeId {
        let id = NodeId(self.nodes.len());
        for e in &mut edges {
            e.from = id;
        }
        self.nodes.push(Some(PackageNode {
            id,
            name: manifest.name.clone(),
            version: manifest.version.clone(),
            manifest,
            parent,
            children: BTreeMap::new(),
            edges_out: edges,
        }));
        id
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.get(id.0).is_some_and(Option::is_some)
    }

    pub fn node(&self, id: NodeId) -> &PackageNode {
        self.nodes[id.0].as_ref().expect("live node")
    }

    fn node_mut(&mut self, id: NodeId) -> &mut PackageNode {
        self.nodes[id.0].as_mut().expect("live node")
    }

    pub fn get(&self, id: NodeId) -> Option<&PackageNode> {
        self.nodes.get(id.0).and_then(Option::as_ref)
    }

    pub fn edge(&self, e: EdgeRef) -> &DependencyEdge {
        &self.node(e.from).edges_out[e.index]
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.node(id).parent
    }

    pub fn child(&self, dir: NodeId, name: &str) -> Option<NodeId> {
        self.node(dir).children.get(name).copied()
    }

    /// Live node ids in allocation order.
    pub fn live(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().flatten().map(|n| n.id)
    }

    pub fn len(&self) -> usize {
        self.live().count()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Places a new node under `parent`. The slot must be free.
    pub fn insert_child(&mut self, parent: NodeId, manifest: Arc<Manifest>, edges: Vec<DependencyEdge>) -> NodeId {
        assert!(self.child(parent, &manifest.name).is_none(), "slot occupied");
        let name = manifest.name.clone();
        let id = self.alloc(Some(parent), manifest, edges);
        self.node_mut(parent).children.insert(name, id);
        id
    }

    /// Detaches and drops `id` with everything below it. Returns removed ids.
    pub fn remove_subtree(&mut self, id: NodeId) -> Vec<NodeId> {
        assert_ne!(id, self.root, "root cannot be removed");
        let removed = self.subtree(id);
        let name = self.node(id).name.clone();
        if let Some(p) = self.parent(id) {
            self.node_mut(p).children.remove(&name);
        }
        for r in &removed {
            self.nodes[r.0] = None;
        }
        removed
    }

    /// `id` and all of its descendants, preorder with children by name.
    pub fn subtree(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(self.node(n).children.values().rev().copied());
        }
        out
    }

    /// True when `anc` is `id` or one of its ancestors.
    pub fn is_ancestor_or_self(&self, anc: NodeId, id: NodeId) -> bool {
        let mut cur = Some(id);
        while let Some(c) = cur {
            if c == anc {
                return true;
            }
            cur = self.parent(c);
        }
        false
    }

    pub fn depth(&self, id: NodeId) -> usize {
        let mut d = 0;
        let mut cur = self.parent(id);
        while let Some(c) = cur {
            d += 1;
            cur = self.parent(c);
        }
        d
    }

    /// Edges (any status) currently resolved to `id`, in source order.
    pub fn in_edges(&self, id: NodeId) -> Vec<EdgeRef> {
        let mut out = Vec::new();
        for n in self.nodes.iter().flatten() {
            for (i, e) in n.edges_out.iter().enumerate() {
                if e.resolved == Some(id) {
                    out.push(EdgeRef { from: n.id, index: i });
                }
            }
        }
        out
    }

    /// Finds the active edge of `from` targeting `name`.
    pub fn edge_to(&self, from: NodeId, name: &str) -> Option<EdgeRef> {
        self.node(from)
            .edges_out
            .iter()
            .position(|e| e.to_name == name && e.is_active())
            .map(|index| EdgeRef { from, index })
    }

    /// Directory-walk lookup starting with the children of `dir`.
    pub fn lookup_from(&self, dir: NodeId, name: &str) -> Option<NodeId> {
        let mut cur = Some(dir);
        while let Some(d) = cur {
            if let Some(&c) = self.node(d).children.get(name) {
                return Some(c);
            }
            cur = self.parent(d);
        }
        None
    }

    /// True when a lookup of `name` started at `viewer` passes every
    /// directory below `pos` without a hit, i.e. a copy placed in `pos`
    /// would be the one `viewer` loads. False if `pos` is not on the path.
    pub fn sees_through(&self, viewer: NodeId, pos: NodeId, name: &str) -> bool {
        let mut cur = Some(viewer);
        while let Some(d) = cur {
            if d == pos {
                return true;
            }
            if self.node(d).children.contains_key(name) {
                return false;
            }
            cur = self.parent(d);
        }
        false
    }

    /// Nodes reachable from `entry` over valid active peer edges,
    /// excluding `entry` itself.
    pub fn peer_closure(&self, entry: NodeId) -> Vec<NodeId> {
        let mut seen = HashSet::from([entry]);
        let mut out = Vec::new();
        let mut queue = VecDeque::from([entry]);
        while let Some(n) = queue.pop_front() {
            for e in &self.node(n).edges_out {
                if e.kind != DepKind::Peer || !e.is_active() || e.status != EdgeStatus::Valid {
                    continue;
                }
                let t = e.resolved.expect("valid edge is resolved");
                if seen.insert(t) {
                    out.push(t);
                    queue.push_back(t);
                }
            }
        }
        out
    }

    /// Every member of `entry`'s peer closure is what `source` loads.
    pub fn peers_visible_from(&self, source: NodeId, entry: NodeId) -> bool {
        self.peer_closure(entry)
            .into_iter()
            .all(|m| {
                let n = self.node(m);
                resolve_name(self, source, &n.name).is_some_and(|r| r == m || self.node(r).version == n.version)
            })
    }

    /// Like `sees_through`, but also true when `viewer` already loads an
    /// identical `name@version` copy from below `pos`.
    pub fn sees_equivalent(&self, viewer: NodeId, pos: NodeId, name: &str, version: &crate::semver::Version) -> bool {
        self.sees_through(viewer, pos, name)
            || (self.is_ancestor_or_self(pos, viewer)
                && self.lookup_from(viewer, name).is_some_and(|r| &self.node(r).version == version))
    }

    /// Entries of the peer sets containing `id`: climbs valid peer in-edges
    /// and keeps the nodes that have a regular in-edge (or `id` itself when
    /// nothing climbs further).
    pub fn peer_entries(&self, id: NodeId) -> Vec<NodeId> {
        let mut seen = HashSet::from([id]);
        let mut queue = VecDeque::from([id]);
        let mut entries = BTreeSet::new();
        while let Some(n) = queue.pop_front() {
            let ins = self.in_edges(n);
            let mut climbed = false;
            for e in &ins {
                let edge = self.edge(*e);
                if edge.kind == DepKind::Peer && edge.is_active() && edge.status == EdgeStatus::Valid {
                    climbed = true;
                    if seen.insert(e.from) {
                        queue.push_back(e.from);
                    }
                }
            }
            if ins.iter().any(|e| self.edge(*e).kind == DepKind::Regular) || !climbed {
                entries.insert(n);
            }
        }
        entries.into_iter().collect()
    }

    /// Regular in-edges of the entries of every peer set containing `id`.
    pub fn peer_source_edges(&self, id: NodeId) -> Vec<EdgeRef> {
        let mut out: Vec<EdgeRef> = self
            .peer_entries(id)
            .into_iter()
            .flat_map(|entry| self.in_edges(entry))
            .filter(|e| self.edge(*e).kind == DepKind::Regular)
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Structural invariants; used by tests and debug assertions.
    pub fn check_well_formed(&self) -> Result<(), String> {
        if self.node(self.root).parent.is_some() {
            return Err("root has a parent".into());
        }
        let reachable: HashSet<NodeId> = self.subtree(self.root).into_iter().collect();
        for n in self.nodes.iter().flatten() {
            if !reachable.contains(&n.id) {
                return Err(format!("node {} is detached", n.name));
            }
            for (name, &c) in &n.children {
                let child = self.get(c).ok_or_else(|| format!("dangling child {name}"))?;
                if &child.name != name || child.parent != Some(n.id) {
                    return Err(format!("child {name} of {} is inconsistent", n.name));
                }
            }
            for e in &n.edges_out {
                match e.status {
                    EdgeStatus::Valid => {
                        let t = e.resolved.and_then(|t| self.get(t)).ok_or("valid edge without target")?;
                        if t.name != e.to_name || !e.req.accepts(&t.version) {
                            return Err(format!("edge {}->{} marked valid but unsatisfied", n.name, e.to_name));
                        }
                    }
                    EdgeStatus::Missing if e.resolved.is_some() => {
                        return Err(format!("missing edge {}->{} has a target", n.name, e.to_name));
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }
}

/// Node.js loading rule: children of `from`, then each ancestor's children
/// up to the root.
pub fn resolve_name(tree: &NodeTree, from: NodeId, name: &str) -> Option<NodeId> {
    tree.lookup_from(from, name)
}

pub fn tree_position(tree: &NodeTree, id: NodeId) -> TreePosition {
    let mut names = Vec::new();
    let mut cur = Some(id);
    while let Some(c) = cur {
        let parent = tree.parent(c);
        names.push(if parent.is_some() {
            tree.node(c).name.clone()
        } else {
            ROOT_LABEL.to_string()
        });
        cur = parent;
    }
    names.reverse();
    TreePosition(names)
}

fn base_status(tree: &NodeTree, e: &DependencyEdge) -> (Option<NodeId>, EdgeStatus) {
    match resolve_name(tree, e.from, &e.to_name) {
        None => (None, EdgeStatus::Missing),
        Some(t) if e.req.accepts(&tree.node(t).version) => (Some(t), EdgeStatus::Valid),
        Some(t) => (Some(t), EdgeStatus::Invalid),
    }
}

/// Recomputes edges after a mutation touching `touched` names and returns
/// the edges whose status changed. Edges named in `touched` get a fresh
/// lookup; regular edges into nodes with peers also recheck that the
/// target's peer closure is visible from the source.
pub fn revalidate_edges(tree: &mut NodeTree, touched: &BTreeSet<String>) -> Vec<EdgeChange> {
    if touched.is_empty() {
        return Vec::new();
    }
    let mut before: HashMap<EdgeRef, EdgeStatus> = HashMap::new();
    let ids: Vec<NodeId> = tree.live().collect();
    for &id in &ids {
        for i in 0..tree.node(id).edges_out.len() {
            let e = &tree.node(id).edges_out[i];
            if !touched.contains(&e.to_name) {
                continue;
            }
            let (resolved, status) = base_status(tree, e);
            before.insert(EdgeRef { from: id, index: i }, e.status);
            let e = &mut tree.node_mut(id).edges_out[i];
            e.resolved = resolved;
            e.status = status;
        }
    }
    for &id in &ids {
        for i in 0..tree.node(id).edges_out.len() {
            let e = &tree.node(id).edges_out[i];
            if e.kind != DepKind::Regular || e.optional {
                continue;
            }
            let er = EdgeRef { from: id, index: i };
            let (resolved, mut status) = if before.contains_key(&er) {
                (e.resolved, e.status)
            } else {
                base_status(tree, e)
            };
            let Some(target) = resolved else { continue };
            if !before.contains_key(&er) && !tree.node(target).manifest.has_peers() {
                continue;
            }
            if status == EdgeStatus::Valid && !tree.peers_visible_from(id, target) {
                status = EdgeStatus::Invalid;
            }
            before.entry(er).or_insert(e.status);
            tree.node_mut(id).edges_out[i].status = status;
        }
    }
    let mut changes: Vec<EdgeChange> = before
        .into_iter()
        .filter_map(|(edge, b)| {
            let after = tree.edge(edge).status;
            (after != b).then_some(EdgeChange { edge, before: b, after })
        })
        .collect();
    changes.sort();
    changes
}

/// A peer requirement that the version already chosen for that name does
/// not satisfy. Carried forward as an invalid edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerConflict {
    pub declarer: String,
    pub name: String,
    pub spec: String,
    pub chosen: Version,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerMember {
    pub name: String,
    pub version: Version,
    pub manifest: Option<Arc<Manifest>>,
    /// True when the member is a version already visible from the target
    /// directory rather than a fresh load.
    pub bound: bool,
    /// The visible node, when the binding came from a tree.
    pub node: Option<NodeId>,
    /// Name of the member whose declaration pulled this one in.
    pub declared_by: Option<String>,
}

impl PeerMember {
    pub fn is_bound(&self) -> bool {
        self.bound
    }
}

/// A package plus the closure of its peer declarations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerSet {
    /// Index 0 is the entry; the rest follow breadth-first, by name within
    /// each declarer.
    pub members: Vec<PeerMember>,
    pub conflicts: Vec<PeerConflict>,
    pub source_edges: Vec<EdgeRef>,
}

impl PeerSet {
    pub fn entry(&self) -> &PeerMember {
        &self.members[0]
    }

    pub fn member(&self, name: &str) -> Option<&PeerMember> {
        self.members.iter().find(|m| m.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.members.iter().map(|m| m.name.as_str()).collect()
    }
}

/// A version already visible at the target directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextBinding {
    pub version: Version,
    pub node: Option<NodeId>,
}

/// Breadth-first peer closure of `entry`. Each peer name is bound to the
/// context version when `context` has one, otherwise loaded from `store`.
pub fn compute_peer_set_with(
    entry: Arc<Manifest>,
    store: &dyn PackumentSource,
    context: &dyn Fn(&str) -> Option<ContextBinding>,
) -> Result<PeerSet, RegistryError> {
    let mut set = PeerSet {
        members: vec![PeerMember {
            name: entry.name.clone(),
            version: entry.version.clone(),
            manifest: Some(Arc::clone(&entry)),
            bound: false,
            node: None,
            declared_by: None,
        }],
        conflicts: Vec::new(),
        source_edges: Vec::new(),
    };
    let mut next = 0;
    while next < set.members.len() {
        let Some(manifest) = set.members[next].manifest.clone() else {
            next += 1;
            continue;
        };
        if set.members[next].is_bound() {
            next += 1;
            continue;
        }
        for (name, spec) in manifest.required_peers() {
            let req = interpret_spec(store, name, spec);
            if let Some(existing) = set.member(name) {
                if !req.accepts(&existing.version) {
                    set.conflicts.push(PeerConflict {
                        declarer: manifest.name.clone(),
                        name: name.clone(),
                        spec: spec.clone(),
                        chosen: existing.version.clone(),
                    });
                }
                continue;
            }
            let member = if let Some(ctx) = context(name) {
                if !req.accepts(&ctx.version) {
                    set.conflicts.push(PeerConflict {
                        declarer: manifest.name.clone(),
                        name: name.clone(),
                        spec: spec.clone(),
                        chosen: ctx.version.clone(),
                    });
                }
                PeerMember {
                    name: name.clone(),
                    version: ctx.version,
                    manifest: None,
                    bound: true,
                    node: ctx.node,
                    declared_by: Some(manifest.name.clone()),
                }
            } else {
                let range = match req {
                    EdgeReq::Range(r) => r,
                    EdgeReq::Unsupported(spec) => {
                        return Err(RegistryError::UnsupportedSpec { name: name.clone(), spec })
                    }
                };
                let (version, m) = select_version(store, name, &Requested::Range(range))?;
                PeerMember {
                    name: name.clone(),
                    version,
                    manifest: Some(m),
                    bound: false,
                    node: None,
                    declared_by: Some(manifest.name.clone()),
                }
            };
            set.members.push(member);
        }
        next += 1;
    }
    Ok(set)
}

/// Peer closure with an explicit list of already-chosen versions.
pub fn compute_peer_set(
    entry: Arc<Manifest>,
    store: &dyn PackumentSource,
    context: &[(String, Version)],
) -> Result<PeerSet, RegistryError> {
    let lookup = |name: &str| {
        context
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| ContextBinding {
                version: v.clone(),
                node: None,
            })
    };
    compute_peer_set_with(entry, store, &lookup)
}
