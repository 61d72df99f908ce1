//! Recency-ordered map with O(1) touch, insert and eviction.
//!
//! Nodes live in a slab and are linked from least to most recently used;
//! a hash index maps keys to slab slots.

use alloc::vec::Vec;
use core::hash::{BuildHasherDefault, Hash};

use hashbrown::HashMap;
use rustc_hash::FxHasher;

pub(crate) type FxMap<K, V> = HashMap<K, V, BuildHasherDefault<FxHasher>>;

const NIL: usize = usize::MAX;

#[derive(Debug, Clone)]
struct Node<K, V> {
    key: K,
    value: V,
    prev: usize,
    next: usize,
}

#[derive(Debug, Clone)]
pub struct LruMap<K, V> {
    slots: Vec<Option<Node<K, V>>>,
    free: Vec<usize>,
    index: FxMap<K, usize>,
    head: usize,
    tail: usize,
}

impl<K: Copy + Eq + Hash, V> Default for LruMap<K, V> {
    fn default() -> Self {
        Self::new()
    }
}

impl<K: Copy + Eq + Hash, V> LruMap<K, V> {
    pub fn new() -> Self {
        Self {
            slots: Vec::new(),
            free: Vec::new(),
            index: FxMap::default(),
            head: NIL,
            tail: NIL,
        }
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn contains(&self, key: &K) -> bool {
        self.index.contains_key(key)
    }

    pub fn get(&self, key: &K) -> Option<&V> {
        let slot = *self.index.get(key)?;
        self.node(slot).map(|n| &n.value)
    }

    pub fn get_mut(&mut self, key: &K) -> Option<&mut V> {
        let slot = *self.index.get(key)?;
        self.slots[slot].as_mut().map(|n| &mut n.value)
    }

    /// Moves `key` to the MRU position. Returns false when absent.
    pub fn touch(&mut self, key: &K) -> bool {
        let Some(&slot) = self.index.get(key) else {
            return false;
        };
        if slot != self.tail {
            self.unlink(slot);
            self.push_back(slot);
        }
        true
    }

    /// Inserts at MRU. An existing entry is replaced and moved to MRU.
    pub fn insert(&mut self, key: K, value: V) -> Option<V> {
        if let Some(&slot) = self.index.get(&key) {
            let old = core::mem::replace(&mut self.slots[slot].as_mut().unwrap().value, value);
            self.touch(&key);
            return Some(old);
        }
        let node = Node { key, value, prev: NIL, next: NIL };
        let slot = match self.free.pop() {
            Some(s) => {
                self.slots[s] = Some(node);
                s
            }
            None => {
                self.slots.push(Some(node));
                self.slots.len() - 1
            }
        };
        self.index.insert(key, slot);
        self.push_back(slot);
        None
    }

    pub fn remove(&mut self, key: &K) -> Option<V> {
        let slot = self.index.remove(key)?;
        self.unlink(slot);
        self.free.push(slot);
        self.slots[slot].take().map(|n| n.value)
    }

    /// Least recently used entry.
    pub fn peek_lru(&self) -> Option<(&K, &V)> {
        self.node(self.head).map(|n| (&n.key, &n.value))
    }

    pub fn pop_lru(&mut self) -> Option<(K, V)> {
        let key = self.node(self.head)?.key;
        self.remove(&key).map(|v| (key, v))
    }

    /// Iterates from least to most recently used.
    pub fn iter(&self) -> Iter<'_, K, V> {
        Iter { map: self, cursor: self.head }
    }

    pub fn keys(&self) -> impl Iterator<Item = K> + '_ {
        self.iter().map(|(k, _)| *k)
    }

    fn node(&self, slot: usize) -> Option<&Node<K, V>> {
        if slot == NIL {
            return None;
        }
        self.slots[slot].as_ref()
    }

    fn unlink(&mut self, slot: usize) {
        let (prev, next) = {
            let n = self.slots[slot].as_ref().unwrap();
            (n.prev, n.next)
        };
        if prev == NIL {
            self.head = next;
        } else {
            self.slots[prev].as_mut().unwrap().next = next;
        }
        if next == NIL {
            self.tail = prev;
        } else {
            self.slots[next].as_mut().unwrap().prev = prev;
        }
    }

    fn push_back(&mut self, slot: usize) {
        let old_tail = self.tail;
        {
            let n = self.slots[slot].as_mut().unwrap();
            n.prev = old_tail;
            n.next = NIL;
        }
        if old_tail == NIL {
            self.head = slot;
        } else {
            self.slots[old_tail].as_mut().unwrap().next = slot;
        }
        self.tail = slot;
    }
}

pub struct Iter<'a, K, V> {
    map: &'a LruMap<K, V>,
    cursor: usize,
}

impl<'a, K: Copy + Eq + Hash, V> Iterator for Iter<'a, K, V> {
    type Item = (&'a K, &'a V);

    fn next(&mut self) -> Option<Self::Item> {
        let n = self.map.node(self.cursor)?;
        self.cursor = n.next;
        Some((&n.key, &n.value))
    }
}
