//! CIFAR-10 binary batches: records of one label byte followed by
//! 3072 pixel bytes (three 32×32 channel planes, red first).

use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const CIFAR_PIXELS: usize = 3 * 32 * 32;
pub const CIFAR_RECORD_BYTES: usize = CIFAR_PIXELS + 1;

pub fn load_cifar_binary(path: impl AsRef<Path>, num_classes: usize) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_cifar_binary(&bytes, num_classes)
}

/// Pixels are scaled to `[0, 1]`.
pub fn parse_cifar_binary(bytes: &[u8], num_classes: usize) -> Result<Dataset> {
    let full = bytes.len() / CIFAR_RECORD_BYTES;
    if bytes.len() % CIFAR_RECORD_BYTES != 0 {
        let offset = (full * CIFAR_RECORD_BYTES) as u64;
        return Err(Error::Format {
            offset,
            detail: format!(
                "truncated record: {} trailing bytes, records are {CIFAR_RECORD_BYTES} bytes",
                bytes.len() % CIFAR_RECORD_BYTES
            ),
        });
    }
    let mut labels = Vec::with_capacity(full);
    let mut data = Vec::with_capacity(full * CIFAR_PIXELS);
    for (i, record) in bytes.chunks_exact(CIFAR_RECORD_BYTES).enumerate() {
        let label = record[0] as usize;
        if label >= num_classes {
            return Err(Error::Format {
                offset: (i * CIFAR_RECORD_BYTES) as u64,
                detail: format!("label byte {label} is not below {num_classes}"),
            });
        }
        labels.push(label);
        data.extend(record[1..].iter().map(|&b| b as f64 / 255.0));
    }
    Dataset::new(Matrix::new(full, CIFAR_PIXELS, data)?, labels, num_classes)
}
