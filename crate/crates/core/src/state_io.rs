//! Self-describing binary container for distributed states.
//!
//! All integers and scalars are little-endian:
//!
//! ```text
//! magic        8  b"ENTWAVE\0"
//! version      u32 (= 1)
//! scalar tag   u8  (0 real, 1 complex), then 3 zero bytes
//! model hash   32  SHA-256 of the model and cut description
//! run hash     32  SHA-256 of the producing run configuration (zeros if none)
//! components   u32 quantum-number components c
//! target       c × i32
//! pairs        u64 n
//! per pair     c × i32 q_l, c × i32 q_r, u64 d_L, u64 d_R
//! ranks        u32 P
//! columns      n × P × u64, owned column counts, pair-major
//! payload      per pair, per rank: owned columns, column-major scalars
//! ```

use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::scalar::{Scalar, ScalarKind};
use crate::state::{BlockWavefunction, DistributionLayout};
use crate::symmetry::{EntanglementCut, QuantumNumber, SectorPair, SectorPairTable};
use crate::transport::ColumnBlock;

pub const MAGIC: &[u8; 8] = b"ENTWAVE\0";
pub const VERSION: u32 = 1;

/// SHA-256 of the JSON form of the model and cut.
pub fn model_hash(model: &ModelSpec, cut: &EntanglementCut) -> [u8; 32] {
    let json = serde_json::to_vec(&(model, cut)).expect("model serializes");
    Sha256::digest(json).into()
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateHeader {
    pub kind: ScalarKind,
    pub model_hash: [u8; 32],
    pub run_hash: [u8; 32],
    pub table: SectorPairTable,
    pub ranks: usize,
}

pub fn encode_state<T: Scalar>(psi: &BlockWavefunction<T>, model_hash: [u8; 32], run_hash: [u8; 32]) -> Vec<u8> {
    let layout = psi.layout();
    let table = layout.table();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&[T::KIND.tag(), 0, 0, 0]);
    out.extend_from_slice(&model_hash);
    out.extend_from_slice(&run_hash);
    out.extend_from_slice(&(table.target.len() as u32).to_le_bytes());
    let put_q = |out: &mut Vec<u8>, q: &QuantumNumber| {
        for c in q.components() {
            out.extend_from_slice(&c.to_le_bytes());
        }
    };
    put_q(&mut out, &table.target);
    out.extend_from_slice(&(table.len() as u64).to_le_bytes());
    for p in table.pairs() {
        put_q(&mut out, &p.left);
        put_q(&mut out, &p.right);
        out.extend_from_slice(&(p.d_left as u64).to_le_bytes());
        out.extend_from_slice(&(p.d_right as u64).to_le_bytes());
    }
    out.extend_from_slice(&(layout.ranks() as u32).to_le_bytes());
    for q in 0..layout.pairs() {
        for &c in layout.columns(q) {
            out.extend_from_slice(&(c as u64).to_le_bytes());
        }
    }
    for q in 0..layout.pairs() {
        for rank in 0..layout.ranks() {
            for &x in &psi.block(rank, q).data {
                x.write_le(&mut out);
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::Format(format!("truncated at byte {} (needed {n} more)", self.at))
        })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn qn(&mut self, c: usize) -> Result<QuantumNumber> {
        let v = (0..c)
            .map(|_| Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap())))
            .collect::<Result<Vec<_>>>()?;
        Ok(QuantumNumber::new(v))
    }
}

fn usize_of(v: u64, what: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in memory")))
}

pub fn decode_header(bytes: &[u8]) -> Result<(StateHeader, Vec<Vec<usize>>, usize)> {
    let mut r = Reader { bytes, at: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let tag = r.take(4)?;
    let kind = ScalarKind::from_tag(tag[0]).ok_or_else(|| Error::Format(format!("unknown scalar tag {}", tag[0])))?;
    let model_hash: [u8; 32] = r.take(32)?.try_into().unwrap();
    let run_hash: [u8; 32] = r.take(32)?.try_into().unwrap();
    let c = r.u32()? as usize;
    if c == 0 || c > 8 {
        return Err(Error::Format(format!("implausible component count {c}")));
    }
    let target = r.qn(c)?;
    let n = usize_of(r.u64()?, "pair count")?;
    let mut pairs = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let left = r.qn(c)?;
        let right = r.qn(c)?;
        let d_left = usize_of(r.u64()?, "d_L")?;
        let d_right = usize_of(r.u64()?, "d_R")?;
        pairs.push(SectorPair { left, right, d_left, d_right });
    }
    let table = SectorPairTable::from_pairs(target, pairs).map_err(|e| Error::Format(e.to_string()))?;
    let ranks = r.u32()? as usize;
    if ranks == 0 {
        return Err(Error::Format("zero ranks".into()));
    }
    let columns = (0..n)
        .map(|_| (0..ranks).map(|_| usize_of(r.u64()?, "column count")).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok((StateHeader { kind, model_hash, run_hash, table, ranks }, columns, r.at))
}

pub fn decode_state<T: Scalar>(bytes: &[u8]) -> Result<(StateHeader, BlockWavefunction<T>)> {
    let (header, columns, start) = decode_header(bytes)?;
    if header.kind != T::KIND {
        return Err(Error::Format(format!("file holds {:?} amplitudes, requested {:?}", header.kind, T::KIND)));
    }
    let layout = Arc::new(DistributionLayout::new(header.table.clone(), header.ranks)?);
    for (q, cols) in columns.iter().enumerate() {
        if cols.as_slice() != layout.columns(q) {
            return Err(Error::Format(format!("column ownership of pair {q} does not follow the balanced split")));
        }
    }
    let mut psi = BlockWavefunction::<T>::zeros(&layout);
    let mut r = Reader { bytes, at: start };
    for q in 0..layout.pairs() {
        for rank in 0..layout.ranks() {
            let block: &mut ColumnBlock<T> = psi.block_mut(rank, q);
            let raw = r.take(block.data.len() * T::BYTES)?;
            for (x, chunk) in block.data.iter_mut().zip(raw.chunks_exact(T::BYTES)) {
                *x = T::read_le(chunk);
            }
        }
    }
    if r.at != bytes.len() {
        return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.at)));
    }
    Ok((header, psi))
}

pub fn save_state<T: Scalar>(
    path: &std::path::Path,
    psi: &BlockWavefunction<T>,
    model_hash: [u8; 32],
    run_hash: [u8; 32],
) -> Result<()> {
    std::fs::write(path, encode_state(psi, model_hash, run_hash))?;
    Ok(())
}

pub fn load_state<T: Scalar>(path: &std::path::Path) -> Result<(StateHeader, BlockWavefunction<T>)> {
    decode_state(&std::fs::read(path)?)
}
