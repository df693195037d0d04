//! Image datasets and the IDX file format.

use std::path::Path;

use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::grid::{Grid, Shape};

use super::NetworkSpec;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Byte pixel to `[-1, 1]`: `p / 127.5 - 1`.
pub fn normalize_byte(p: u8) -> f64 {
    p as f64 / 127.5 - 1.0
}

pub fn denormalize_byte(v: f64) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

/// Images as one or more maps each, with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<Vec<Grid>>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn truncate(&mut self, n: usize) {
        self.images.truncate(n);
        self.labels.truncate(n);
    }

    /// Seeded images with pixels drawn from the byte grid and uniform labels.
    pub fn synthetic(n: usize, maps: usize, shape: Shape, classes: usize, seed: u64) -> Self {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut images = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let img = (0..maps)
                .map(|_| Grid::from_fn(shape, |_, _| normalize_byte(rng.gen())))
                .collect();
            images.push(img);
            labels.push(rng.gen_range(0..classes));
        }
        Self { images, labels }
    }

    /// Checks map count, shape, pixel range and labels against `net`.
    pub fn check_against(&self, net: &NetworkSpec) -> Result<()> {
        for (i, img) in self.images.iter().enumerate() {
            if img.len() != net.input_maps {
                return Err(Error::Dataset(format!(
                    "image {i} has {} maps, network '{}' expects {}",
                    img.len(),
                    net.name,
                    net.input_maps
                )));
            }
            for g in img {
                if g.shape() != net.input_shape {
                    return Err(Error::Dataset(format!(
                        "image {i} is {}, network expects {}",
                        g.shape(),
                        net.input_shape
                    )));
                }
                if g.as_slice().iter().any(|v| !(-1.0..=1.0).contains(v)) {
                    return Err(Error::Dataset(format!("image {i} has pixels outside [-1, 1]")));
                }
            }
        }
        if let Some((i, &l)) = self.labels.iter().enumerate().find(|(_, &l)| l >= net.class_count) {
            return Err(Error::Dataset(format!(
                "label {l} of image {i} is not below class_count {}",
                net.class_count
            )));
        }
        Ok(())
    }
}

fn be_u32(bytes: &[u8], at: usize, origin: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::parse(origin, "truncated IDX header"))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Reads an IDX image file (magic 0x803) and label file (magic 0x801),
/// normalizing pixels with [`normalize_byte`].
pub fn load_idx_dataset(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img_origin = images_path.display().to_string();
    let lbl_origin = labels_path.display().to_string();
    let ib = read(images_path)?;
    let lb = read(labels_path)?;
    let magic = be_u32(&ib, 0, &img_origin)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::parse(img_origin, format!("image magic {magic:#010x}, expected 0x00000803")));
    }
    let magic = be_u32(&lb, 0, &lbl_origin)?;
    if magic != LABELS_MAGIC {
        return Err(Error::parse(lbl_origin, format!("label magic {magic:#010x}, expected 0x00000801")));
    }
    let n = be_u32(&ib, 4, &img_origin)? as usize;
    let rows = be_u32(&ib, 8, &img_origin)? as usize;
    let cols = be_u32(&ib, 12, &img_origin)? as usize;
    let nl = be_u32(&lb, 4, &lbl_origin)? as usize;
    if n != nl {
        return Err(Error::Dataset(format!("{n} images but {nl} labels")));
    }
    let cells = rows * cols;
    let pixels = &ib[16..];
    if pixels.len() != n * cells {
        return Err(Error::parse(img_origin, format!("expected {} pixel bytes, found {}", n * cells, pixels.len())));
    }
    let labels = &lb[8..];
    if labels.len() != n {
        return Err(Error::parse(lbl_origin, format!("expected {n} label bytes, found {}", labels.len())));
    }
    let shape = Shape::new(rows, cols);
    let images = pixels
        .chunks_exact(cells.max(1))
        .take(n)
        .map(|chunk| {
            let g = Grid::from_vec(shape, chunk.iter().map(|&p| normalize_byte(p)).collect()).expect("chunk size");
            vec![g]
        })
        .collect();
    Ok(Dataset {
        images,
        labels: labels.iter().map(|&l| l as usize).collect(),
    })
}

pub fn write_idx_images(path: &Path, images: &[Grid]) -> Result<()> {
    let shape = images.first().map_or(Shape::new(0, 0), Grid::shape);
    let mut out = Vec::new();
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(shape.rows as u32).to_be_bytes());
    out.extend_from_slice(&(shape.cols as u32).to_be_bytes());
    for g in images {
        if g.shape() != shape {
            return Err(Error::Shape("IDX images must share one shape".into()));
        }
        out.extend(g.as_slice().iter().map(|&v| denormalize_byte(v)));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        let b = u8::try_from(l).map_err(|_| Error::Dataset(format!("label {l} does not fit a byte")))?;
        out.push(b);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
