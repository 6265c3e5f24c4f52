//! Binary heatmap-stack container.
//!
//! Layout (all little-endian):
//!
//! | offset | size | field              |
//! |--------|------|--------------------|
//! | 0      | 4    | magic `FHRS`       |
//! | 4      | 2    | version (u16 = 1)  |
//! | 6      | 4    | width (u32)        |
//! | 10     | 4    | height (u32)       |
//! | 14     | 4    | num_maps (u32)     |
//! | 18     | 8    | sigma (f64)        |
//! | 26     | 8    | scale (f64)        |
//! | 34     | ...  | values (f64), map-major then row-major |

use std::io::{Read, Write};

use super::{GridSpec, Heatmap, HeatmapStack};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FHRS";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 34;

pub fn write_stack<W: Write>(mut w: W, stack: &HeatmapStack) -> Result<()> {
    let g = &stack.grid;
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(MAGIC);
    header.extend_from_slice(&VERSION.to_le_bytes());
    for v in [g.width, g.height, stack.maps.len()] {
        let v = u32::try_from(v)
            .map_err(|_| Error::Shape(format!("dimension {v} does not fit in u32")))?;
        header.extend_from_slice(&v.to_le_bytes());
    }
    header.extend_from_slice(&g.sigma.to_le_bytes());
    header.extend_from_slice(&g.scale.to_le_bytes());
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(g.width * g.height * 8);
    for map in &stack.maps {
        buf.clear();
        for v in map.values() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_stack<R: Read>(mut r: R) -> Result<HeatmapStack> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    parse(&bytes)
}

fn fmt_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset,
        message: message.into(),
    }
}

fn parse(bytes: &[u8]) -> Result<HeatmapStack> {
    if bytes.len() < HEADER_LEN {
        return Err(fmt_err(
            bytes.len(),
            format!("truncated header: {} of {HEADER_LEN} bytes", bytes.len()),
        ));
    }
    if &bytes[0..4] != MAGIC {
        return Err(fmt_err(0, format!("bad magic {:?}", &bytes[0..4])));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(fmt_err(4, format!("unsupported version {version}")));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let (width, height, num_maps) = (u32_at(6), u32_at(10), u32_at(14));
    let (sigma, scale) = (f64_at(18), f64_at(26));
    let grid = GridSpec {
        width,
        height,
        scale,
        sigma,
    };
    grid.validate().map_err(|e| fmt_err(6, e.to_string()))?;

    let per_map = width * height;
    let expected = num_maps
        .checked_mul(per_map)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| fmt_err(6, "declared dimensions overflow"))?;
    if bytes.len() != expected {
        return Err(fmt_err(
            bytes.len().min(expected),
            format!("expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    let maps = bytes[HEADER_LEN..]
        .chunks_exact(per_map * 8)
        .map(|chunk| {
            let values = chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            Heatmap::new(width, height, values)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HeatmapStack { grid, maps })
}
