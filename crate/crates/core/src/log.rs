//! Byte layout of the consensus log.
//!
//! Remote replicas address the log by byte offset, so the layout is fixed:
//!
//! ```text
//! header:  [min_proposal: u64 LE | fuo: u64 LE]
//! slot k:  [proposal: u64 LE | len: u16 LE | payload: V bytes | canary: u8]
//! ```
//!
//! Logical index `i` lives in physical slot `i mod capacity`. A slot whose
//! canary byte is zero is empty; the all-zero image is the empty slot. Writes
//! are applied left to right, so a reader never observes a non-zero canary on
//! a partially written entry.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const MIN_PROPOSAL_OFFSET: usize = 0;
pub const FUO_OFFSET: usize = 8;
pub const HEADER_SIZE: usize = 16;

const PROPOSAL_BYTES: usize = 8;
const LEN_BYTES: usize = 2;
const CANARY_BYTES: usize = 1;

/// Canary value written on every encoded entry.
pub const CANARY: u8 = 1;

pub const DEFAULT_VALUE_SIZE: usize = 64;

/// Decoded content of one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SlotImage {
    Empty,
    Entry { proposal: u64, value: Vec<u8> },
}

impl SlotImage {
    pub fn is_empty(&self) -> bool {
        matches!(self, SlotImage::Empty)
    }

    pub fn value(&self) -> Option<&[u8]> {
        match self {
            SlotImage::Empty => None,
            SlotImage::Entry { value, .. } => Some(value),
        }
    }

    pub fn proposal(&self) -> u64 {
        match self {
            SlotImage::Empty => 0,
            SlotImage::Entry { proposal, .. } => *proposal,
        }
    }
}

/// Geometry of a log region: slot count and maximum payload size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogLayout {
    capacity: u64,
    value_size: usize,
}

impl LogLayout {
    pub fn new(capacity: u64, value_size: usize) -> Result<Self> {
        if capacity < 2 {
            return Err(Error::Config(
                "log capacity must be at least 2 slots".into(),
            ));
        }
        if value_size == 0 || value_size > u16::MAX as usize {
            return Err(Error::Config(
                "slot payload size must be in 1..=65535".into(),
            ));
        }
        Ok(LogLayout {
            capacity,
            value_size,
        })
    }

    pub const fn capacity(&self) -> u64 {
        self.capacity
    }

    pub const fn value_size(&self) -> usize {
        self.value_size
    }

    pub const fn slot_width(&self) -> usize {
        PROPOSAL_BYTES + LEN_BYTES + self.value_size + CANARY_BYTES
    }

    pub const fn region_size(&self) -> usize {
        HEADER_SIZE + self.capacity as usize * self.slot_width()
    }

    pub const fn physical(&self, index: u64) -> u64 {
        index % self.capacity
    }

    /// Byte span of the physical slot holding logical `index`.
    pub const fn slot_span(&self, index: u64) -> (usize, usize) {
        let offset = HEADER_SIZE + self.physical(index) as usize * self.slot_width();
        (offset, self.slot_width())
    }

    /// Number of consecutive logical indices starting at `index` that are also
    /// physically contiguous (stops at the wrap point).
    pub const fn contiguous_run(&self, index: u64, count: u64) -> u64 {
        let to_end = self.capacity - self.physical(index);
        if count < to_end {
            count
        } else {
            to_end
        }
    }

    pub fn encode_slot(&self, proposal: u64, value: &[u8]) -> Result<Vec<u8>> {
        if proposal == 0 {
            return Err(Error::ZeroProposal);
        }
        if value.len() > self.value_size {
            return Err(Error::OversizeValue {
                len: value.len(),
                max: self.value_size,
            });
        }
        let mut image = vec![0u8; self.slot_width()];
        image[..PROPOSAL_BYTES].copy_from_slice(&proposal.to_le_bytes());
        image[PROPOSAL_BYTES..PROPOSAL_BYTES + LEN_BYTES]
            .copy_from_slice(&(value.len() as u16).to_le_bytes());
        let body = PROPOSAL_BYTES + LEN_BYTES;
        image[body..body + value.len()].copy_from_slice(value);
        *image.last_mut().expect("slot width is non-zero") = CANARY;
        Ok(image)
    }

    /// Decodes a slot image. Total: wrong-width images read as empty and a
    /// corrupt length field is clamped to the payload capacity.
    pub fn decode_slot(&self, image: &[u8]) -> SlotImage {
        if image.len() != self.slot_width() || image[image.len() - 1] == 0 {
            return SlotImage::Empty;
        }
        let proposal = read_u64(image, 0);
        let len = u16::from_le_bytes([image[PROPOSAL_BYTES], image[PROPOSAL_BYTES + 1]]) as usize;
        let len = len.min(self.value_size);
        let body = PROPOSAL_BYTES + LEN_BYTES;
        SlotImage::Entry {
            proposal,
            value: image[body..body + len].to_vec(),
        }
    }

    pub fn empty_image(&self) -> Vec<u8> {
        vec![0u8; self.slot_width()]
    }
}

pub fn read_u64(bytes: &[u8], offset: usize) -> u64 {
    let mut buf = [0u8; 8];
    buf.copy_from_slice(&bytes[offset..offset + 8]);
    u64::from_le_bytes(buf)
}

pub fn write_u64(bytes: &mut [u8], offset: usize, value: u64) {
    bytes[offset..offset + 8].copy_from_slice(&value.to_le_bytes());
}

/// Read-only view of a log region's bytes.
#[derive(Clone, Copy)]
pub struct LogView<'a> {
    layout: LogLayout,
    bytes: &'a [u8],
}

impl<'a> LogView<'a> {
    pub fn new(layout: LogLayout, bytes: &'a [u8]) -> Self {
        debug_assert_eq!(bytes.len(), layout.region_size());
        LogView { layout, bytes }
    }

    pub fn min_proposal(&self) -> u64 {
        read_u64(self.bytes, MIN_PROPOSAL_OFFSET)
    }

    pub fn fuo(&self) -> u64 {
        read_u64(self.bytes, FUO_OFFSET)
    }

    pub fn slot(&self, index: u64) -> SlotImage {
        let (off, len) = self.layout.slot_span(index);
        self.layout.decode_slot(&self.bytes[off..off + len])
    }

    pub fn is_nonempty(&self, index: u64) -> bool {
        let (off, len) = self.layout.slot_span(index);
        self.bytes[off + len - 1] != 0
    }

    /// Highest logical index in `[log_head, log_head + capacity)` that holds
    /// an entry.
    pub fn scan_highest_nonempty(&self, log_head: u64) -> Option<u64> {
        (log_head..log_head + self.layout.capacity)
            .rev()
            .find(|&i| self.is_nonempty(i))
    }

    /// First empty logical index at or after `from`, scanning at most one
    /// full lap of the ring.
    pub fn first_empty_from(&self, from: u64) -> u64 {
        let mut i = from;
        while i < from + self.layout.capacity && self.is_nonempty(i) {
            i += 1;
        }
        i
    }
}
