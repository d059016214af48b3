//! Interaction sets, knowledge-graph triples and the collaborative knowledge
//! graph (CKG) that merges them.
//!
//! Global node layout is fixed: users occupy `0..users`, items occupy
//! `users..users + items`, and knowledge-graph entities that are not aligned
//! to an item follow in ascending entity id order. An entity aligned to an item
//! shares that item's node.
//!
//! Relation layout is fixed as well. With `F` forward relations, relation `0`
//! is `interact`, knowledge-graph relation `r` becomes `r + 1`, and the reverse
//! of forward relation `f` is `f + F`.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Relation id of user-item interactions.
pub const INTERACT: u32 = 0;

/// Observed user-item feedback, deduplicated and sorted by `(user, item)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InteractionSet {
    user_count: usize,
    item_count: usize,
    pairs: Vec<(u32, u32)>,
}

impl InteractionSet {
    /// Builds a set with explicit counts. Duplicates are dropped.
    pub fn new(user_count: usize, item_count: usize, mut pairs: Vec<(u32, u32)>) -> Result<Self> {
        for &(u, i) in &pairs {
            check_index("user", u as usize, user_count)?;
            check_index("item", i as usize, item_count)?;
        }
        pairs.sort_unstable();
        pairs.dedup();
        Ok(Self {
            user_count,
            item_count,
            pairs,
        })
    }

    /// Builds a set whose counts are one past the largest observed ids.
    pub fn from_pairs(pairs: Vec<(u32, u32)>) -> Self {
        let user_count = pairs.iter().map(|p| p.0 as usize + 1).max().unwrap_or(0);
        let item_count = pairs.iter().map(|p| p.1 as usize + 1).max().unwrap_or(0);
        Self::new(user_count, item_count, pairs).expect("counts derived from the pairs")
    }

    pub fn user_count(&self) -> usize {
        self.user_count
    }

    pub fn item_count(&self) -> usize {
        self.item_count
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, user: u32, item: u32) -> bool {
        self.pairs.binary_search(&(user, item)).is_ok()
    }

    /// Sorted item lists indexed by user.
    pub fn items_by_user(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.user_count];
        for &(u, i) in &self.pairs {
            out[u as usize].push(i);
        }
        out
    }

    /// Sorted user lists indexed by item.
    pub fn users_by_item(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.item_count];
        for &(u, i) in &self.pairs {
            out[i as usize].push(u);
        }
        out
    }

    /// Distinct users with at least one pair.
    pub fn users(&self) -> BTreeSet<u32> {
        self.pairs.iter().map(|p| p.0).collect()
    }

    /// Distinct items with at least one pair.
    pub fn items(&self) -> BTreeSet<u32> {
        self.pairs.iter().map(|p| p.1).collect()
    }

    /// Same counts, subset of pairs.
    pub fn with_pairs(&self, pairs: Vec<(u32, u32)>) -> Self {
        Self::new(self.user_count, self.item_count, pairs).expect("pairs drawn from a valid set")
    }

    /// Union of two sets over the larger of the two id spaces.
    pub fn union(&self, other: &InteractionSet) -> Self {
        let mut pairs = self.pairs.clone();
        pairs.extend_from_slice(&other.pairs);
        Self::new(
            self.user_count.max(other.user_count),
            self.item_count.max(other.item_count),
            pairs,
        )
        .expect("both sets are valid")
    }
}

/// Knowledge-graph triples `(head, relation, tail)` over local entity ids.
///
/// Duplicates are removed on construction; the first occurrence keeps its
/// position.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TripleSet {
    entity_count: usize,
    relation_count: usize,
    triples: Vec<(u32, u32, u32)>,
}

impl TripleSet {
    pub fn new(entity_count: usize, relation_count: usize, triples: Vec<(u32, u32, u32)>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        let mut kept = Vec::with_capacity(triples.len());
        for t in triples {
            check_index("entity", t.0 as usize, entity_count)?;
            check_index("relation", t.1 as usize, relation_count)?;
            check_index("entity", t.2 as usize, entity_count)?;
            if seen.insert(t) {
                kept.push(t);
            }
        }
        Ok(Self {
            entity_count,
            relation_count,
            triples: kept,
        })
    }

    /// Counts are one past the largest observed ids.
    pub fn from_triples(triples: Vec<(u32, u32, u32)>) -> Self {
        let entity_count = triples.iter().map(|t| t.0.max(t.2) as usize + 1).max().unwrap_or(0);
        let relation_count = triples.iter().map(|t| t.1 as usize + 1).max().unwrap_or(0);
        Self::new(entity_count, relation_count, triples).expect("counts derived from the triples")
    }

    pub fn entity_count(&self) -> usize {
        self.entity_count
    }

    pub fn relation_count(&self) -> usize {
        self.relation_count
    }

    pub fn triples(&self) -> &[(u32, u32, u32)] {
        &self.triples
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

/// What a global node stands for, in local ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    User(u32),
    Item(u32),
    /// An entity without item alignment.
    Entity(u32),
}

/// Reverse-closed multi-relational graph stored as CSR by head node.
///
/// Each head's adjacency is sorted by `(tail, relation)` and holds no
/// duplicates. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollaborativeKG {
    user_count: usize,
    item_count: usize,
    forward_relations: usize,
    /// Global node of each local entity.
    entity_node: Vec<u32>,
    /// Aligned entity of each item.
    item_entity: Vec<Option<u32>>,
    /// Local entity id of each unaligned-entity node, offset by `users + items`.
    node_entity: Vec<u32>,
    offsets: Vec<usize>,
    rels: Vec<u32>,
    tails: Vec<u32>,
}

/// Merges interactions, triples and the item-entity alignment into a CKG.
pub fn build_ckg(inter: &InteractionSet, kg: &TripleSet, alignment: &[(u32, u32)]) -> Result<CollaborativeKG> {
    let users = inter.user_count();
    let items = inter.item_count();
    let entities = kg.entity_count();

    let mut item_entity: Vec<Option<u32>> = vec![None; items];
    let mut entity_item: Vec<Option<u32>> = vec![None; entities];
    for &(item, entity) in alignment {
        check_index("item", item as usize, items)?;
        check_index("entity", entity as usize, entities)?;
        if let Some(prev) = item_entity[item as usize] {
            if prev != entity {
                return Err(Error::Alignment(format!(
                    "item {item} aligned to entities {prev} and {entity}"
                )));
            }
        }
        if let Some(prev) = entity_item[entity as usize] {
            if prev != item {
                return Err(Error::Alignment(format!(
                    "entity {entity} aligned to items {prev} and {item}"
                )));
            }
        }
        item_entity[item as usize] = Some(entity);
        entity_item[entity as usize] = Some(item);
    }

    let base = users + items;
    let mut entity_node = Vec::with_capacity(entities);
    let mut node_entity = Vec::new();
    for (e, aligned) in entity_item.iter().enumerate() {
        match aligned {
            Some(item) => entity_node.push((users as u32) + item),
            None => {
                entity_node.push((base + node_entity.len()) as u32);
                node_entity.push(e as u32);
            }
        }
    }
    let node_count = base + node_entity.len();
    let forward_relations = kg.relation_count() + 1;

    let mut edges: Vec<(u32, u32, u32)> = Vec::with_capacity(2 * (inter.len() + kg.len()));
    for &(u, i) in inter.pairs() {
        edges.push((u, INTERACT, users as u32 + i));
    }
    for &(h, r, t) in kg.triples() {
        edges.push((entity_node[h as usize], r + 1, entity_node[t as usize]));
    }
    let (offsets, rels, tails) = csr_with_reverses(node_count, forward_relations, edges);

    Ok(CollaborativeKG {
        user_count: users,
        item_count: items,
        forward_relations,
        entity_node,
        item_entity,
        node_entity,
        offsets,
        rels,
        tails,
    })
}

fn csr_with_reverses(
    node_count: usize,
    forward_relations: usize,
    forward: Vec<(u32, u32, u32)>,
) -> (Vec<usize>, Vec<u32>, Vec<u32>) {
    let f = forward_relations as u32;
    let mut all: Vec<(u32, u32, u32)> = Vec::with_capacity(forward.len() * 2);
    for (h, r, t) in forward {
        // stored as (head, tail, rel) so sorting yields per-head (tail, rel) order
        all.push((h, t, r));
        all.push((t, h, r + f));
    }
    all.sort_unstable();
    all.dedup();
    let mut offsets = vec![0usize; node_count + 1];
    for &(h, _, _) in &all {
        offsets[h as usize + 1] += 1;
    }
    for n in 0..node_count {
        offsets[n + 1] += offsets[n];
    }
    let rels = all.iter().map(|e| e.2).collect();
    let tails = all.iter().map(|e| e.1).collect();
    (offsets, rels, tails)
}

impl CollaborativeKG {
    /// Builds a graph directly from global forward edges, adding reverses.
    ///
    /// Nodes past `users + items` are treated as unaligned entities with local
    /// ids in node order. Relation ids must be `< forward_relations`.
    pub fn from_forward_edges(
        user_count: usize,
        item_count: usize,
        node_count: usize,
        forward_relations: usize,
        edges: Vec<(u32, u32, u32)>,
    ) -> Result<Self> {
        let base = user_count + item_count;
        if node_count < base {
            return Err(Error::Config(format!(
                "node count {node_count} smaller than users + items {base}"
            )));
        }
        if forward_relations == 0 {
            return Err(Error::Config("at least one forward relation required".into()));
        }
        for &(h, r, t) in &edges {
            check_index("node", h as usize, node_count)?;
            check_index("relation", r as usize, forward_relations)?;
            check_index("node", t as usize, node_count)?;
        }
        let extra = node_count - base;
        let (offsets, rels, tails) = csr_with_reverses(node_count, forward_relations, edges);
        Ok(Self {
            user_count,
            item_count,
            forward_relations,
            entity_node: (0..extra).map(|e| (base + e) as u32).collect(),
            item_entity: vec![None; item_count],
            node_entity: (0..extra as u32).collect(),
            offsets,
            rels,
            tails,
        })
    }

    /// Reassembles a graph from its serialized parts, validating every
    /// structural invariant (sorted adjacency, reverse closure, id maps).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        user_count: usize,
        item_count: usize,
        forward_relations: usize,
        entity_node: Vec<u32>,
        item_entity: Vec<Option<u32>>,
        offsets: Vec<usize>,
        rels: Vec<u32>,
        tails: Vec<u32>,
    ) -> Result<Self> {
        let base = user_count + item_count;
        if item_entity.len() != item_count || offsets.is_empty() || offsets[0] != 0 {
            return Err(Error::Contract("inconsistent CKG header".into()));
        }
        let node_count = offsets.len() - 1;
        if *offsets.last().unwrap() != rels.len() || rels.len() != tails.len() {
            return Err(Error::Contract("CSR arrays disagree in length".into()));
        }
        let mut node_entity = vec![u32::MAX; node_count.saturating_sub(base)];
        for (e, &n) in entity_node.iter().enumerate() {
            let n = n as usize;
            check_index("node", n, node_count)?;
            if n >= base {
                node_entity[n - base] = e as u32;
            } else if n < user_count || item_entity[n - user_count] != Some(e as u32) {
                return Err(Error::Contract(format!("entity {e} maps to foreign node {n}")));
            }
        }
        if node_entity.contains(&u32::MAX) {
            return Err(Error::Contract("entity nodes without entity ids".into()));
        }
        let g = Self {
            user_count,
            item_count,
            forward_relations,
            entity_node,
            item_entity,
            node_entity,
            offsets,
            rels,
            tails,
        };
        for n in 0..node_count {
            if g.offsets[n] > g.offsets[n + 1] {
                return Err(Error::Contract("CSR offsets decrease".into()));
            }
            let (r, t) = g.edges_of(n as u32);
            for k in 0..t.len() {
                check_index("node", t[k] as usize, node_count)?;
                check_index("relation", r[k] as usize, g.relation_count())?;
                if k > 0 && (t[k - 1], r[k - 1]) >= (t[k], r[k]) {
                    return Err(Error::Contract(format!("adjacency of {n} not sorted")));
                }
            }
        }
        if !g.is_reverse_closed() {
            return Err(Error::Contract("graph is not reverse-closed".into()));
        }
        Ok(g)
    }

    pub fn user_count(&self) -> usize {
        self.user_count
    }

    pub fn item_count(&self) -> usize {
        self.item_count
    }

    /// Local entity count of the source knowledge graph.
    pub fn entity_count(&self) -> usize {
        self.entity_node.len()
    }

    pub fn node_count(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Forward relations, `interact` included.
    pub fn forward_relation_count(&self) -> usize {
        self.forward_relations
    }

    /// Forward plus reverse relations.
    pub fn relation_count(&self) -> usize {
        2 * self.forward_relations
    }

    pub fn reverse_relation(&self, rel: u32) -> u32 {
        let f = self.forward_relations as u32;
        if rel < f {
            rel + f
        } else {
            rel - f
        }
    }

    pub fn edge_count(&self) -> usize {
        self.tails.len()
    }

    pub fn user_node(&self, user: u32) -> u32 {
        user
    }

    pub fn item_node(&self, item: u32) -> u32 {
        self.user_count as u32 + item
    }

    pub fn entity_node(&self, entity: u32) -> u32 {
        self.entity_node[entity as usize]
    }

    /// Item id of a node, if it is an item node.
    pub fn node_item(&self, node: u32) -> Option<u32> {
        let n = node as usize;
        (n >= self.user_count && n < self.user_count + self.item_count).then(|| (n - self.user_count) as u32)
    }

    pub fn item_entity(&self, item: u32) -> Option<u32> {
        self.item_entity[item as usize]
    }

    pub fn entity_nodes(&self) -> &[u32] {
        &self.entity_node
    }

    pub fn item_entities(&self) -> &[Option<u32>] {
        &self.item_entity
    }

    pub fn node_kind(&self, node: u32) -> NodeKind {
        let n = node as usize;
        let base = self.user_count + self.item_count;
        if n < self.user_count {
            NodeKind::User(node)
        } else if n < base {
            NodeKind::Item((n - self.user_count) as u32)
        } else {
            NodeKind::Entity(self.node_entity[n - base])
        }
    }

    /// Global id of a local id.
    pub fn global(&self, kind: NodeKind) -> u32 {
        match kind {
            NodeKind::User(u) => self.user_node(u),
            NodeKind::Item(i) => self.item_node(i),
            NodeKind::Entity(e) => self.entity_node(e),
        }
    }

    /// `(relations, tails)` of a head node, sorted by `(tail, relation)`.
    pub fn edges_of(&self, node: u32) -> (&[u32], &[u32]) {
        let (a, b) = (self.offsets[node as usize], self.offsets[node as usize + 1]);
        (&self.rels[a..b], &self.tails[a..b])
    }

    pub fn out_degree(&self, node: u32) -> usize {
        self.offsets[node as usize + 1] - self.offsets[node as usize]
    }

    pub fn contains_edge(&self, head: u32, rel: u32, tail: u32) -> bool {
        let (r, t) = self.edges_of(head);
        let mut lo = 0usize;
        let mut hi = t.len();
        while lo < hi {
            let mid = (lo + hi) / 2;
            match (t[mid], r[mid]).cmp(&(tail, rel)) {
                core::cmp::Ordering::Less => lo = mid + 1,
                core::cmp::Ordering::Greater => hi = mid,
                core::cmp::Ordering::Equal => return true,
            }
        }
        false
    }

    /// Every stored edge as `(head, relation, tail)`, in storage order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32, u32)> + '_ {
        (0..self.node_count()).flat_map(move |h| {
            let (r, t) = self.edges_of(h as u32);
            r.iter().zip(t).map(move |(&r, &t)| (h as u32, r, t))
        })
    }

    /// Full scan of the reverse-closure invariant.
    pub fn is_reverse_closed(&self) -> bool {
        self.edges()
            .all(|(h, r, t)| self.contains_edge(t, self.reverse_relation(r), h))
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn relations(&self) -> &[u32] {
        &self.rels
    }

    pub fn tails(&self) -> &[u32] {
        &self.tails
    }
}

fn check_index(what: &'static str, index: usize, limit: usize) -> Result<()> {
    if index < limit {
        Ok(())
    } else {
        Err(Error::Index { what, index, limit })
    }
}
