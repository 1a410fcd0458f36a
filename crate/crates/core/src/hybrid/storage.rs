//! Binary persistence for fusion models.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic          "LMRT1" (5 bytes)
//! version        u32 (currently 1)
//! feature_count  u32
//! learning_rate  f64
//! n_trees        u32
//! per tree:      n_nodes u32, then per node:
//!   tag u8: 0 = split (feature u32, threshold f64, left u32, right u32)
//!           1 = leaf  (value f64)
//! ```
//!
//! Floats are stored bit-for-bit, so a save/load round-trip yields
//! bit-identical predictions, and saving the same model twice yields
//! byte-identical files.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::tree::{Node, RegressionTree, TreeEnsemble};

const MAGIC: &[u8; 5] = b"LMRT1";
const VERSION: u32 = 1;

pub fn save_model(ensemble: &TreeEnsemble, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(ensemble.feature_count as u32).to_le_bytes())?;
    out.write_all(&ensemble.learning_rate.to_le_bytes())?;
    out.write_all(&(ensemble.trees.len() as u32).to_le_bytes())?;
    for tree in &ensemble.trees {
        out.write_all(&(tree.nodes.len() as u32).to_le_bytes())?;
        for node in &tree.nodes {
            match node {
                Node::Split { feature, threshold, left, right } => {
                    out.write_all(&[0u8])?;
                    out.write_all(&(*feature as u32).to_le_bytes())?;
                    out.write_all(&threshold.to_le_bytes())?;
                    out.write_all(&(*left as u32).to_le_bytes())?;
                    out.write_all(&(*right as u32).to_le_bytes())?;
                }
                Node::Leaf { value } => {
                    out.write_all(&[1u8])?;
                    out.write_all(&value.to_le_bytes())?;
                }
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TreeEnsemble> {
    let mut reader = BufReader::new(File::open(path.as_ref())?);
    let mut magic = [0u8; 5];
    reader.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}, expected {MAGIC:?}")));
    }
    let mut u32buf = [0u8; 4];
    let mut f64buf = [0u8; 8];
    let mut read_u32 = |r: &mut BufReader<File>| -> Result<u32> {
        r.read_exact(&mut u32buf)?;
        Ok(u32::from_le_bytes(u32buf))
    };

    let version = read_u32(&mut reader)?;
    if version != VERSION {
        return Err(Error::Version { found: version, expected: VERSION });
    }
    let feature_count = read_u32(&mut reader)? as usize;
    reader.read_exact(&mut f64buf)?;
    let learning_rate = f64::from_le_bytes(f64buf);
    let n_trees = read_u32(&mut reader)? as usize;

    let mut trees = Vec::with_capacity(n_trees);
    for _ in 0..n_trees {
        let n_nodes = read_u32(&mut reader)? as usize;
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let mut tag = [0u8; 1];
            reader.read_exact(&mut tag)?;
            match tag[0] {
                0 => {
                    let feature = read_u32(&mut reader)? as usize;
                    reader.read_exact(&mut f64buf)?;
                    let threshold = f64::from_le_bytes(f64buf);
                    let left = read_u32(&mut reader)? as usize;
                    let right = read_u32(&mut reader)? as usize;
                    nodes.push(Node::Split { feature, threshold, left, right });
                }
                1 => {
                    reader.read_exact(&mut f64buf)?;
                    nodes.push(Node::Leaf { value: f64::from_le_bytes(f64buf) });
                }
                tag => return Err(Error::Format(format!("unknown node tag {tag}"))),
            }
        }
        trees.push(RegressionTree { nodes });
    }
    TreeEnsemble::from_parts(trees, learning_rate, feature_count)
}
