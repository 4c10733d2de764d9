//! Lazily computed columns of the composite matrix `Phi = H Omega`.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use crate::haar::{basis_footprint, CoefficientLayout};
use crate::projector::SystemMatrix;

/// Signed sparse column `phi(. | z)`, rows strictly increasing, no zeros.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseColumn {
    pub rows: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseColumn {
    pub fn nnz(&self) -> usize {
        self.rows.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.rows
            .iter()
            .zip(&self.values)
            .map(|(&r, &v)| (r as usize, v))
    }

    pub fn get(&self, row: usize) -> f64 {
        match self.rows.binary_search(&(row as u32)) {
            Ok(k) => self.values[k],
            Err(_) => 0.0,
        }
    }
}

/// `H` applied to the Haar basis image of coefficient `z`.
///
/// Contributions are accumulated footprint voxel by footprint voxel, so the
/// result is bit-identical every time it is computed.
pub fn compute_phi_column(h: &SystemMatrix, layout: &CoefficientLayout, z: usize) -> SparseColumn {
    let footprint = basis_footprint(layout, z);
    let mut acc: HashMap<u32, f64> = HashMap::new();
    let mut touched: Vec<u32> = Vec::new();
    for (voxel, weight) in footprint {
        let (rows, vals) = h.column(voxel);
        for (&r, &len) in rows.iter().zip(vals) {
            acc.entry(r)
                .and_modify(|v| *v += weight * len)
                .or_insert_with(|| {
                    touched.push(r);
                    weight * len
                });
        }
    }
    touched.sort_unstable();
    let mut col = SparseColumn::default();
    for r in touched {
        let v = acc[&r];
        if v != 0.0 {
            col.rows.push(r);
            col.values.push(v);
        }
    }
    col
}

struct Entry {
    column: Arc<SparseColumn>,
    last_used: AtomicU64,
}

/// Cache of `phi` columns keyed by flat coefficient index.
///
/// Reads take a shared lock; insertion is exclusive. Two threads may compute
/// the same column concurrently, which is harmless since the result is
/// deterministic. With a capacity set, the least recently used column is
/// evicted on insertion.
pub struct WaveletSystemColumns {
    layout: CoefficientLayout,
    capacity: Option<usize>,
    clock: AtomicU64,
    computed: AtomicU64,
    map: RwLock<HashMap<usize, Entry>>,
}

impl WaveletSystemColumns {
    pub fn new(layout: CoefficientLayout) -> Self {
        WaveletSystemColumns::with_capacity(layout, None)
    }

    pub fn with_capacity(layout: CoefficientLayout, capacity: Option<usize>) -> Self {
        WaveletSystemColumns {
            layout,
            capacity: capacity.map(|c| c.max(1)),
            clock: AtomicU64::new(0),
            computed: AtomicU64::new(0),
            map: RwLock::new(HashMap::new()),
        }
    }

    pub fn layout(&self) -> &CoefficientLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.map.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of columns computed so far (cache misses).
    pub fn computed(&self) -> u64 {
        self.computed.load(Ordering::Relaxed)
    }

    pub fn contains(&self, z: usize) -> bool {
        self.map.read().unwrap().contains_key(&z)
    }

    pub fn phi_column(&self, z: usize, h: &SystemMatrix) -> Arc<SparseColumn> {
        let tick = self.clock.fetch_add(1, Ordering::Relaxed);
        if let Some(e) = self.map.read().unwrap().get(&z) {
            e.last_used.store(tick, Ordering::Relaxed);
            return Arc::clone(&e.column);
        }
        let column = Arc::new(compute_phi_column(h, &self.layout, z));
        self.computed.fetch_add(1, Ordering::Relaxed);
        let mut map = self.map.write().unwrap();
        if let Some(e) = map.get(&z) {
            return Arc::clone(&e.column);
        }
        if let Some(cap) = self.capacity {
            while map.len() >= cap {
                let oldest = map
                    .iter()
                    .min_by_key(|(k, e)| (e.last_used.load(Ordering::Relaxed), **k))
                    .map(|(k, _)| *k);
                match oldest {
                    Some(k) => map.remove(&k),
                    None => break,
                };
            }
        }
        map.insert(
            z,
            Entry {
                column: Arc::clone(&column),
                last_used: AtomicU64::new(tick),
            },
        );
        column
    }
}
