//! Versioned little-endian binary format for forests, plus a text dump.
//!
//! ```text
//! magic    8 bytes  "PCRFFRST"
//! version  u16
//! labels   u32 count, then strings; neutral as i32 (-1 = none)
//! subjects u32 count, then strings
//! trees    u32 count, then per tree:
//!            bootstrap  u32 count, u32 subject indices
//!            nodes      u32 count, nodes in preorder:
//!                         0u8, n_labels × f64           leaf
//!                         1u8, feature, f64 threshold   split
//! ```
//! Strings are a u32 byte length followed by UTF-8. Child links are implied
//! by the preorder layout.

use std::fmt::Write as _;

use super::ensemble::Forest;
use super::tree::{Node, Tree};
use crate::channels::HogParams;
use crate::error::{Error, Result};
use crate::features::{Feature, Template};
use crate::frame::LabelSet;

pub const FOREST_MAGIC: &[u8; 8] = b"PCRFFRST";
pub const FOREST_VERSION: u16 = 1;

pub trait FeatureCodec: Sized {
    fn encode(&self, out: &mut Vec<u8>);
    fn decode(r: &mut Reader<'_>) -> Result<Self>;
}

pub fn put_u8(out: &mut Vec<u8>, v: u8) {
    out.push(v);
}

pub fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn put_i32(out: &mut Vec<u8>, v: i32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

pub fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    put_u64(out, b.len() as u64);
    out.extend_from_slice(b);
}

/// Cursor over an encoded buffer.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn is_at_end(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!(
                "truncated input at byte {} (need {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.u64()? as usize;
        self.take(n)
    }

    /// A count that must fit in the remaining input at `min_size` bytes per
    /// element; guards allocations against corrupt lengths.
    pub fn count(&mut self, min_size: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_size.max(1)) > self.buf.len() - self.pos {
            return Err(Error::Format(format!(
                "implausible count {n} at byte {}",
                self.pos
            )));
        }
        Ok(n)
    }

    pub fn expect_magic(&mut self, magic: &[u8; 8]) -> Result<()> {
        let m = self.take(8)?;
        if m != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(m),
                String::from_utf8_lossy(magic)
            )));
        }
        Ok(())
    }
}

fn put_hog(out: &mut Vec<u8>, p: &HogParams) {
    for v in p.triangle {
        put_u16(out, v);
    }
    put_u8(out, p.channel);
    put_f64(out, p.size);
    for v in p.barycentric {
        put_f64(out, v);
    }
}

fn read_hog(r: &mut Reader<'_>) -> Result<HogParams> {
    let triangle = [r.u16()?, r.u16()?, r.u16()?];
    let channel = r.u8()?;
    if !(1..=8).contains(&channel) {
        return Err(Error::Format(format!(
            "orientation channel {channel} out of range"
        )));
    }
    let size = r.f64()?;
    let barycentric = [r.f64()?, r.f64()?, r.f64()?];
    Ok(HogParams {
        triangle,
        channel,
        size,
        barycentric,
    })
}

impl FeatureCodec for Feature {
    fn encode(&self, out: &mut Vec<u8>) {
        put_u8(out, self.template().id());
        match self {
            Feature::Distance { a, b } | Feature::DistanceDelta { a, b } => {
                put_u16(out, *a);
                put_u16(out, *b);
            }
            Feature::Angle { a, b, c, use_cos } | Feature::AngleDelta { a, b, c, use_cos } => {
                put_u16(out, *a);
                put_u16(out, *b);
                put_u16(out, *c);
                put_u8(out, *use_cos as u8);
            }
            Feature::Appearance(p) | Feature::AppearanceDelta(p) => put_hog(out, p),
        }
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self> {
        let id = r.u8()?;
        let template =
            Template::from_id(id).ok_or_else(|| Error::Format(format!("unknown template {id}")))?;
        Ok(match template {
            Template::Distance => Feature::Distance {
                a: r.u16()?,
                b: r.u16()?,
            },
            Template::DistanceDelta => Feature::DistanceDelta {
                a: r.u16()?,
                b: r.u16()?,
            },
            Template::Angle | Template::AngleDelta => {
                let (a, b, c) = (r.u16()?, r.u16()?, r.u16()?);
                let use_cos = r.u8()? != 0;
                if template == Template::Angle {
                    Feature::Angle { a, b, c, use_cos }
                } else {
                    Feature::AngleDelta { a, b, c, use_cos }
                }
            }
            Template::Appearance => Feature::Appearance(read_hog(r)?),
            Template::AppearanceDelta => Feature::AppearanceDelta(read_hog(r)?),
        })
    }
}

pub fn put_labels(out: &mut Vec<u8>, labels: &LabelSet) {
    put_u32(out, labels.names.len() as u32);
    for n in &labels.names {
        put_str(out, n);
    }
    put_i32(out, labels.neutral.map_or(-1, |n| n as i32));
}

pub fn read_labels(r: &mut Reader<'_>) -> Result<LabelSet> {
    let n = r.count(4)?;
    let names = (0..n).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
    let neutral = match r.i32()? {
        -1 => None,
        i if i >= 0 && (i as usize) < n => Some(i as usize),
        i => return Err(Error::Format(format!("neutral label {i} out of range"))),
    };
    Ok(LabelSet { names, neutral })
}

impl<F: FeatureCodec> Forest<F> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(FOREST_MAGIC);
        put_u16(&mut out, FOREST_VERSION);
        put_labels(&mut out, &self.labels);
        put_u32(&mut out, self.subjects.len() as u32);
        for s in &self.subjects {
            put_str(&mut out, s);
        }
        put_u32(&mut out, self.len() as u32);
        for (t, tree) in self.trees().iter().enumerate() {
            let boot = self.bootstrap_subjects(t);
            put_u32(&mut out, boot.len() as u32);
            for &s in boot {
                put_u32(&mut out, s as u32);
            }
            put_u32(&mut out, tree.nodes().len() as u32);
            for node in tree.nodes() {
                match node {
                    Node::Leaf { offset } => {
                        put_u8(&mut out, 0);
                        for &p in tree.leaf_distribution(*offset) {
                            put_f64(&mut out, p);
                        }
                    }
                    Node::Split {
                        feature, threshold, ..
                    } => {
                        put_u8(&mut out, 1);
                        feature.encode(&mut out);
                        put_f64(&mut out, *threshold);
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let forest = Self::read(&mut r)?;
        if !r.is_at_end() {
            return Err(Error::Format(format!("trailing bytes at {}", r.position())));
        }
        Ok(forest)
    }

    pub fn read(r: &mut Reader<'_>) -> Result<Self> {
        r.expect_magic(FOREST_MAGIC)?;
        let version = r.u16()?;
        if version != FOREST_VERSION {
            return Err(Error::Format(format!(
                "unsupported forest version {version}"
            )));
        }
        let labels = read_labels(r)?;
        let n_labels = labels.len();
        let n_subjects = r.count(4)?;
        let subjects = (0..n_subjects)
            .map(|_| r.string())
            .collect::<Result<Vec<_>>>()?;
        let n_trees = r.count(8)?;
        let mut trees = Vec::with_capacity(n_trees);
        let mut bootstraps = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let nb = r.count(4)?;
            let mut boot = Vec::with_capacity(nb);
            for _ in 0..nb {
                let s = r.u32()? as usize;
                if s >= n_subjects {
                    return Err(Error::Format(format!("bootstrap subject {s} out of range")));
                }
                boot.push(s);
            }
            bootstraps.push(boot);
            let n_nodes = r.count(1)?;
            let mut nodes = Vec::with_capacity(n_nodes);
            let mut leaf_values = Vec::new();
            for _ in 0..n_nodes {
                match r.u8()? {
                    0 => {
                        let offset = leaf_values.len() as u32;
                        for _ in 0..n_labels {
                            leaf_values.push(r.f64()?);
                        }
                        nodes.push(Node::Leaf { offset });
                    }
                    1 => {
                        let feature = F::decode(r)?;
                        let threshold = r.f64()?;
                        nodes.push(Node::Split {
                            feature,
                            threshold,
                            left: 0,
                            right: 0,
                        });
                    }
                    tag => return Err(Error::Format(format!("unknown node tag {tag}"))),
                }
            }
            link_preorder(&mut nodes)?;
            trees.push(Tree::from_parts(nodes, leaf_values, n_labels));
        }
        Ok(Forest::new(labels, subjects, trees, bootstraps))
    }
}

/// Restores child links of a preorder node array.
fn link_preorder<F>(nodes: &mut [Node<F>]) -> Result<()> {
    // Returns the index one past the subtree rooted at `i`.
    fn walk<F>(nodes: &mut [Node<F>], i: usize, depth: usize) -> Result<usize> {
        if i >= nodes.len() || depth > 4096 {
            return Err(Error::Format("malformed tree: truncated preorder".into()));
        }
        if matches!(nodes[i], Node::Leaf { .. }) {
            return Ok(i + 1);
        }
        let l = i + 1;
        let r = walk(nodes, l, depth + 1)?;
        let end = walk(nodes, r, depth + 1)?;
        if let Node::Split { left, right, .. } = &mut nodes[i] {
            *left = l as u32;
            *right = r as u32;
        }
        Ok(end)
    }
    if nodes.is_empty() {
        return Err(Error::Format("empty tree".into()));
    }
    let end = walk(nodes, 0, 0)?;
    if end != nodes.len() {
        return Err(Error::Format("malformed tree: extra nodes".into()));
    }
    Ok(())
}

impl<F: std::fmt::Display> Forest<F> {
    /// Indented human-readable dump of every tree.
    pub fn debug_dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "forest: {} trees, labels [{}]",
            self.len(),
            self.labels.names.join(", ")
        );
        for (t, tree) in self.trees().iter().enumerate() {
            let boot: Vec<&str> = self
                .bootstrap_subjects(t)
                .iter()
                .map(|&i| self.subjects[i].as_str())
                .collect();
            let _ = writeln!(s, "tree {t} (bootstrap subjects: {})", boot.join(" "));
            dump_node(&mut s, tree, 0, 1);
        }
        s
    }
}

fn dump_node<F: std::fmt::Display>(s: &mut String, tree: &Tree<F>, i: usize, indent: usize) {
    let pad = "  ".repeat(indent);
    match &tree.nodes()[i] {
        Node::Leaf { offset } => {
            let d: Vec<String> = tree
                .leaf_distribution(*offset)
                .iter()
                .map(|p| format!("{p:.3}"))
                .collect();
            let _ = writeln!(s, "{pad}[{i}] leaf [{}]", d.join(", "));
        }
        Node::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            let _ = writeln!(s, "{pad}[{i}] {feature} < {threshold}");
            dump_node(s, tree, *left as usize, indent + 1);
            dump_node(s, tree, *right as usize, indent + 1);
        }
    }
}
