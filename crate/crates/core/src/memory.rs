//! Bounded prototype memory.
//!
//! Prototypes are keyed by class and ordered by a monotone insertion stamp.
//! Inserting a new class into a full memory evicts the slot with the smallest
//! stamp. Re-inserting a known class blends the stored prototype toward the
//! fresh one with the refresh ratio and renews its stamp, so refreshed
//! classes become the youngest.
//!
//! The unrecognizable-identity prototype lives next to the slots, outside the
//! capacity budget, and is refreshed on a fixed step period.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::protogen::{generate_prototype_basic, PrototypeCandidate};
use crate::vecmath::UnitEmbedding;
use crate::ClassId;

const MAGIC: &[u8; 8] = b"QAPMMEM\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeSlot {
    pub class_id: ClassId,
    pub embedding: UnitEmbedding,
    pub stamp: u64,
}

/// What an [`PrototypeMemory::enqueue`] call did.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EnqueueOutcome {
    Inserted { evicted: Vec<ClassId> },
    Refreshed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeMemory {
    capacity: usize,
    dim: usize,
    refresh_ratio: f64,
    ui_period: u64,
    step_counter: u64,
    next_stamp: u64,
    slots: BTreeMap<ClassId, PrototypeSlot>,
    by_stamp: BTreeMap<u64, ClassId>,
    ui_prototype: Option<UnitEmbedding>,
    ui_refreshed_at: Option<u64>,
}

/// `normalize((1 - r) * old + r * fresh)`; falls back to `fresh` when the
/// blend cancels out.
pub fn refresh_blend(old: &UnitEmbedding, fresh: &UnitEmbedding, r: f64) -> UnitEmbedding {
    if r == 1.0 {
        return fresh.clone();
    }
    if r == 0.0 {
        return old.clone();
    }
    let blended: Vec<f64> = old
        .as_slice()
        .iter()
        .zip(fresh.as_slice())
        .map(|(o, f)| (1.0 - r) * o + r * f)
        .collect();
    UnitEmbedding::normalized(&blended).unwrap_or_else(|_| fresh.clone())
}

impl PrototypeMemory {
    pub fn new(capacity: usize, dim: usize, refresh_ratio: f64, ui_period: u64) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::config("memory capacity must be positive"));
        }
        if dim == 0 {
            return Err(Error::config("memory dimension must be positive"));
        }
        if !(0.0..=1.0).contains(&refresh_ratio) {
            return Err(Error::config(format!(
                "refresh ratio must lie in [0, 1], got {refresh_ratio}"
            )));
        }
        if ui_period == 0 {
            return Err(Error::config("ui period must be positive"));
        }
        Ok(Self {
            capacity,
            dim,
            refresh_ratio,
            ui_period,
            step_counter: 0,
            next_stamp: 0,
            slots: BTreeMap::new(),
            by_stamp: BTreeMap::new(),
            ui_prototype: None,
            ui_refreshed_at: None,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn refresh_ratio(&self) -> f64 {
        self.refresh_ratio
    }

    pub fn ui_period(&self) -> u64 {
        self.ui_period
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn step_counter(&self) -> u64 {
        self.step_counter
    }

    pub fn advance_step(&mut self) {
        self.step_counter += 1;
    }

    pub fn ui_prototype(&self) -> Option<&UnitEmbedding> {
        self.ui_prototype.as_ref()
    }

    pub fn contains(&self, class_id: ClassId) -> bool {
        self.slots.contains_key(&class_id)
    }

    pub fn slot(&self, class_id: ClassId) -> Option<&PrototypeSlot> {
        self.slots.get(&class_id)
    }

    /// Slots from oldest to youngest.
    pub fn slots_by_age(&self) -> impl Iterator<Item = &PrototypeSlot> {
        self.by_stamp.values().map(|id| &self.slots[id])
    }

    fn check_dim(&self, e: &UnitEmbedding) -> Result<()> {
        if e.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: e.dim(),
            });
        }
        Ok(())
    }

    fn take_stamp(&mut self) -> u64 {
        let s = self.next_stamp;
        self.next_stamp += 1;
        s
    }

    /// Inserts a new prototype, or refreshes the stored one for a known class.
    pub fn enqueue(&mut self, proto: PrototypeCandidate) -> Result<EnqueueOutcome> {
        self.check_dim(&proto.embedding)?;
        if self.slots.contains_key(&proto.class_id) {
            self.refresh(proto.class_id, &proto.embedding)?;
            return Ok(EnqueueOutcome::Refreshed);
        }
        let mut evicted = Vec::new();
        while self.slots.len() >= self.capacity {
            evicted.extend(self.dequeue_oldest(1)?);
        }
        let stamp = self.take_stamp();
        self.by_stamp.insert(stamp, proto.class_id);
        self.slots.insert(
            proto.class_id,
            PrototypeSlot {
                class_id: proto.class_id,
                embedding: proto.embedding,
                stamp,
            },
        );
        Ok(EnqueueOutcome::Inserted { evicted })
    }

    pub fn refresh(&mut self, class_id: ClassId, fresh: &UnitEmbedding) -> Result<()> {
        self.check_dim(fresh)?;
        let r = self.refresh_ratio;
        let stamp = self.next_stamp;
        let slot = self
            .slots
            .get_mut(&class_id)
            .ok_or(Error::UnknownClass(class_id))?;
        slot.embedding = refresh_blend(&slot.embedding, fresh, r);
        let old_stamp = std::mem::replace(&mut slot.stamp, stamp);
        self.next_stamp += 1;
        self.by_stamp.remove(&old_stamp);
        self.by_stamp.insert(stamp, class_id);
        Ok(())
    }

    /// Removes the `count` oldest slots and returns their classes, oldest first.
    pub fn dequeue_oldest(&mut self, count: usize) -> Result<Vec<ClassId>> {
        if count > self.slots.len() {
            return Err(Error::Underflow {
                requested: count,
                available: self.slots.len(),
            });
        }
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let (_, id) = self.by_stamp.pop_first().expect("count checked");
            self.slots.remove(&id);
            out.push(id);
        }
        Ok(out)
    }

    pub fn lookup(&self, class_ids: &[ClassId]) -> Vec<Option<UnitEmbedding>> {
        class_ids
            .iter()
            .map(|id| self.slots.get(id).map(|s| s.embedding.clone()))
            .collect()
    }

    /// Every stored prototype not in `exclude`, oldest first.
    pub fn negatives_snapshot(&self, exclude: &[ClassId]) -> Vec<(ClassId, UnitEmbedding)> {
        self.slots_by_age()
            .filter(|s| !exclude.contains(&s.class_id))
            .map(|s| (s.class_id, s.embedding.clone()))
            .collect()
    }

    /// Whether [`maybe_refresh_ui`](Self::maybe_refresh_ui) would act at the
    /// current step.
    pub fn ui_refresh_due(&self) -> bool {
        self.step_counter.is_multiple_of(self.ui_period) && self.ui_refreshed_at != Some(self.step_counter)
    }

    /// Refreshes the unrecognizable-identity prototype when the step counter
    /// is a multiple of the period. The first refresh sets it directly; later
    /// ones blend with the refresh ratio. Returns whether it acted.
    pub fn maybe_refresh_ui(&mut self, batch: &[UnitEmbedding]) -> Result<bool> {
        if !self.ui_refresh_due() {
            return Ok(false);
        }
        let fresh = generate_prototype_basic(batch)?;
        self.check_dim(&fresh)?;
        self.ui_prototype = Some(match &self.ui_prototype {
            None => fresh,
            Some(old) => refresh_blend(old, &fresh, self.refresh_ratio),
        });
        self.ui_refreshed_at = Some(self.step_counter);
        Ok(true)
    }

    /// Moves every stored prototype by `-lr * grad` and renormalizes. Used
    /// only when prototypes are trained as a classifier head.
    pub fn apply_gradient(&mut self, class_id: ClassId, grad: &[f64], lr: f64) -> Result<()> {
        let slot = self
            .slots
            .get_mut(&class_id)
            .ok_or(Error::UnknownClass(class_id))?;
        let moved: Vec<f64> = slot
            .embedding
            .as_slice()
            .iter()
            .zip(grad)
            .map(|(p, g)| p - lr * g)
            .collect();
        if let Ok(e) = UnitEmbedding::normalized(&moved) {
            slot.embedding = e;
        }
        Ok(())
    }

    /// Writes the checkpoint format: magic, version, then capacity, refresh
    /// ratio, ui period, step counter, dimension, next stamp, slot count,
    /// slots as `(class_id, stamp, d floats)` oldest first, then a presence
    /// byte and the optional unrecognizable prototype. All integers are
    /// little-endian u64 (version is u32), floats little-endian f64.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.capacity as u64).to_le_bytes())?;
        w.write_all(&self.refresh_ratio.to_le_bytes())?;
        for v in [
            self.ui_period,
            self.step_counter,
            self.dim as u64,
            self.next_stamp,
            self.slots.len() as u64,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for slot in self.slots_by_age() {
            w.write_all(&slot.class_id.0.to_le_bytes())?;
            w.write_all(&slot.stamp.to_le_bytes())?;
            for x in slot.embedding.as_slice() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        match (&self.ui_prototype, self.ui_refreshed_at) {
            (Some(ui), Some(at)) => {
                w.write_all(&[1u8])?;
                w.write_all(&at.to_le_bytes())?;
                for x in ui.as_slice() {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            _ => w.write_all(&[0u8])?,
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::format("memory checkpoint", "bad magic"));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::format(
                "memory checkpoint",
                format!("unsupported version {version}"),
            ));
        }
        let capacity = read_u64(&mut r)? as usize;
        let refresh_ratio = read_f64(&mut r)?;
        let ui_period = read_u64(&mut r)?;
        let step_counter = read_u64(&mut r)?;
        let dim = read_u64(&mut r)? as usize;
        let next_stamp = read_u64(&mut r)?;
        let count = read_u64(&mut r)? as usize;
        let mut mem = Self::new(capacity, dim, refresh_ratio, ui_period)
            .map_err(|e| Error::format("memory checkpoint", e.to_string()))?;
        mem.step_counter = step_counter;
        mem.next_stamp = next_stamp;
        if count > capacity {
            return Err(Error::format("memory checkpoint", "more slots than capacity"));
        }
        for _ in 0..count {
            let class_id = ClassId(read_u64(&mut r)?);
            let stamp = read_u64(&mut r)?;
            let embedding = read_unit(&mut r, dim)?;
            if stamp >= next_stamp || mem.by_stamp.insert(stamp, class_id).is_some() {
                return Err(Error::format("memory checkpoint", "inconsistent stamps"));
            }
            if mem
                .slots
                .insert(class_id, PrototypeSlot { class_id, embedding, stamp })
                .is_some()
            {
                return Err(Error::format("memory checkpoint", "duplicate class"));
            }
        }
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        match flag[0] {
            0 => {}
            1 => {
                mem.ui_refreshed_at = Some(read_u64(&mut r)?);
                mem.ui_prototype = Some(read_unit(&mut r, dim)?);
            }
            other => {
                return Err(Error::format(
                    "memory checkpoint",
                    format!("bad ui flag {other}"),
                ))
            }
        }
        Ok(mem)
    }
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn read_unit<R: Read>(r: &mut R, dim: usize) -> Result<UnitEmbedding> {
    let mut v = Vec::with_capacity(dim);
    for _ in 0..dim {
        v.push(read_f64(r)?);
    }
    UnitEmbedding::try_from_unit(v).map_err(|e| Error::format("memory checkpoint", e.to_string()))
}
