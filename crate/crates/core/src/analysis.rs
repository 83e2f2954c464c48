//! Analytical operation and memory accounting.
//!
//! A dot product of length `L` costs `L` multiplications and `L − 1`
//! additions, so for any layer `adds = mults − output elements`. The naive
//! count charges every kernel tap at every output position; the fused count
//! charges only the taps of the sub-kernel serving each position's parity
//! class.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::reference::TConvGeometry;
use crate::segregation::active_tap_count;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub mults: u64,
    pub adds: u64,
}

/// Shape of one transpose convolution layer on a square input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub n_in: usize,
    pub cin: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub p_orig: usize,
}

impl LayerShape {
    pub fn new(n_in: usize, cin: usize, cout: usize, k: usize, p_orig: usize) -> Self {
        Self {
            n_in,
            cin,
            cout,
            kh: k,
            kw: k,
            p_orig,
        }
    }

    pub fn geometry(&self) -> Result<TConvGeometry> {
        TConvGeometry::new(self.n_in, self.n_in, self.kh, self.kw, self.p_orig)
    }

    pub fn output_elements(&self) -> Result<u64> {
        let g = self.geometry()?;
        Ok((g.out_h * g.out_w * self.cout) as u64)
    }

    pub fn input_label(&self) -> String {
        format!("{}x{}x{}", self.n_in, self.n_in, self.cin)
    }

    pub fn kernel_label(&self) -> String {
        format!("{}x{}x{}x{}", self.kh, self.kw, self.cin, self.cout)
    }
}

pub fn count_ops_naive(shape: &LayerShape) -> Result<OpCounts> {
    let outputs = shape.output_elements()?;
    let mults = outputs * (shape.kh * shape.kw * shape.cin) as u64;
    Ok(OpCounts {
        mults,
        adds: mults - outputs,
    })
}

pub fn count_ops_fused(shape: &LayerShape) -> Result<OpCounts> {
    let g = shape.geometry()?;
    let positions = |out: usize, parity: usize| (out + 1 - parity) / 2;
    let (mut mults, mut outputs) = (0u64, 0u64);
    for r in 0..2 {
        for c in 0..2 {
            let taps = active_tap_count(shape.kh, shape.p_orig, r)
                * active_tap_count(shape.kw, shape.p_orig, c);
            let count = (positions(g.out_h, r) * positions(g.out_w, c) * shape.cout) as u64;
            mults += count * (taps * shape.cin) as u64;
            // An empty sub-kernel leaves its outputs at zero: no adds either.
            if taps > 0 {
                outputs += count;
            }
        }
    }
    Ok(OpCounts {
        mults,
        adds: mults - outputs,
    })
}

/// Bytes of the padded zero-inserted buffer the fused path never allocates,
/// less the `⌊P/2⌋`-padded input buffer it does allocate.
pub fn memory_saved_bytes(shape: &LayerShape, elem_bytes: usize) -> u64 {
    let upsampled = (2 * shape.n_in - 1 + 2 * shape.p_orig).pow(2);
    let fused = (shape.n_in + 2 * (shape.p_orig / 2)).pow(2);
    (elem_bytes * shape.cin * (upsampled - fused)) as u64
}

/// Transpose convolution layers of the GAN generators in the published
/// comparison: `(model, [(layer number, shape)])`. All use 4×4 kernels with
/// padding 2, which doubles the spatial size.
pub fn gan_models() -> Vec<(&'static str, Vec<(u32, LayerShape)>)> {
    let l = |n, cin, cout| LayerShape::new(n, cin, cout, 4, 2);
    vec![
        (
            "DCGAN/DiscoGAN",
            vec![
                (2, l(4, 1024, 512)),
                (3, l(8, 512, 256)),
                (4, l(16, 256, 128)),
                (5, l(32, 128, 3)),
            ],
        ),
        (
            "Art-GAN",
            vec![
                (2, l(4, 512, 256)),
                (3, l(8, 256, 128)),
                (4, l(16, 128, 128)),
                (6, l(32, 128, 3)),
            ],
        ),
        (
            "GP-GAN",
            vec![
                (2, l(4, 512, 256)),
                (3, l(8, 256, 128)),
                (4, l(16, 128, 64)),
                (5, l(32, 64, 3)),
            ],
        ),
        (
            "EB-GAN",
            vec![
                (2, l(4, 2048, 1024)),
                (3, l(8, 1024, 512)),
                (4, l(16, 512, 256)),
                (5, l(32, 256, 128)),
                (6, l(64, 128, 64)),
                (7, l(128, 64, 64)),
            ],
        ),
    ]
}

/// Looks up a GAN model by a loose name such as `dcgan` or `eb-gan`.
pub fn gan_model(name: &str) -> Option<(&'static str, Vec<(u32, LayerShape)>)> {
    let key: String = name
        .chars()
        .filter(char::is_ascii_alphanumeric)
        .collect::<String>()
        .to_ascii_lowercase();
    gan_models().into_iter().find(|(model, _)| {
        let m: String = model
            .chars()
            .filter(char::is_ascii_alphanumeric)
            .collect::<String>()
            .to_ascii_lowercase();
        m == key || m.starts_with(&key) && !key.is_empty()
    })
}

/// Cells of the published operation-count table that do not match the
/// counting rule: `(model, layer or "total", column, printed text)`.
const PRINTED_DISCREPANCIES: &[(&str, &str, &str, &str)] = &[
    ("Art-GAN", "6", "mults_fused", "6,2914,56"),
    ("GP-GAN", "total", "adds_fused", "103,412,048"),
    ("GP-GAN", "total", "reduction_adds", "311,697,072"),
    ("EB-GAN", "6", "mults_fused", "536,8709,12"),
];

/// One row of the operation-count report. Model totals use layer `total`
/// and leave the shape columns empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub layer: String,
    pub input_shape: String,
    pub kernel_shape: String,
    pub mults_naive: u64,
    pub mults_fused: u64,
    pub adds_naive: u64,
    pub adds_fused: u64,
    pub reduction_mults: u64,
    pub reduction_adds: u64,
    pub memory_saved_bytes: u64,
    /// Printed values this row normalizes, if any.
    pub note: String,
}

impl ReportRow {
    pub fn is_total(&self) -> bool {
        self.layer == "total"
    }
}

fn note_for(model: &str, layer: &str) -> String {
    PRINTED_DISCREPANCIES
        .iter()
        .filter(|(m, l, _, _)| *m == model && *l == layer)
        .map(|(_, _, col, printed)| format!("{col} printed as {printed}"))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Per-layer and per-model operation counts for every GAN layer in
/// [`gan_models`], with single-precision memory savings.
pub fn table4_report() -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for (model, layers) in gan_models() {
        let mut total = ReportRow {
            model: model.to_string(),
            layer: "total".to_string(),
            input_shape: String::new(),
            kernel_shape: String::new(),
            mults_naive: 0,
            mults_fused: 0,
            adds_naive: 0,
            adds_fused: 0,
            reduction_mults: 0,
            reduction_adds: 0,
            memory_saved_bytes: 0,
            note: note_for(model, "total"),
        };
        for (layer, shape) in layers {
            let naive = count_ops_naive(&shape).expect("preset geometry is valid");
            let fused = count_ops_fused(&shape).expect("preset geometry is valid");
            let row = ReportRow {
                model: model.to_string(),
                layer: layer.to_string(),
                input_shape: shape.input_label(),
                kernel_shape: shape.kernel_label(),
                mults_naive: naive.mults,
                mults_fused: fused.mults,
                adds_naive: naive.adds,
                adds_fused: fused.adds,
                reduction_mults: naive.mults - fused.mults,
                reduction_adds: naive.adds - fused.adds,
                memory_saved_bytes: memory_saved_bytes(&shape, 4),
                note: note_for(model, &layer.to_string()),
            };
            total.mults_naive += row.mults_naive;
            total.mults_fused += row.mults_fused;
            total.adds_naive += row.adds_naive;
            total.adds_fused += row.adds_fused;
            total.reduction_mults += row.reduction_mults;
            total.reduction_adds += row.reduction_adds;
            total.memory_saved_bytes += row.memory_saved_bytes;
            rows.push(row);
        }
        rows.push(total);
    }
    rows
}

pub fn report_to_csv(rows: &[ReportRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
}

pub fn report_from_csv(text: &str) -> std::result::Result<Vec<ReportRow>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect()
}

pub fn report_to_json(rows: &[ReportRow]) -> String {
    serde_json::to_string_pretty(rows).expect("report serializes")
}
