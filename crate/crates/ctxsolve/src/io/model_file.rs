//! Fusion model file: geometry header plus one record per parameter block.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{
    atomic_write, expect_header, fmt_f64, parse_error, parse_f64, parse_usize, tokenized_lines,
};
use crate::error::Result;
use crate::fusion::{FusionModel, CONV_FILTERS, KERNEL_WIDTH};
use crate::model::NUM_REGIONS;

pub fn model_to_string(m: &FusionModel) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} fusion-model {CONV_FILTERS} {KERNEL_WIDTH} {NUM_REGIONS} {}",
        super::FORMAT_VERSION,
        m.feature_dim
    );
    for f in 0..CONV_FILTERS {
        let _ = write!(out, "conv-filter {f}");
        let taps = &m.conv_filters[f * NUM_REGIONS * KERNEL_WIDTH..(f + 1) * NUM_REGIONS * KERNEL_WIDTH];
        for v in taps {
            let _ = write!(out, " {}", fmt_f64(*v));
        }
        out.push('\n');
    }
    let _ = write!(out, "conv-bias");
    for v in &m.conv_bias {
        let _ = write!(out, " {}", fmt_f64(*v));
    }
    out.push('\n');
    let hidden = m.hidden_len();
    for r in 0..NUM_REGIONS {
        let _ = write!(out, "fc-row {r}");
        for v in &m.fc_weights[r * hidden..(r + 1) * hidden] {
            let _ = write!(out, " {}", fmt_f64(*v));
        }
        out.push('\n');
    }
    let _ = write!(out, "fc-bias");
    for v in &m.fc_bias {
        let _ = write!(out, " {}", fmt_f64(*v));
    }
    out.push('\n');
    out
}

pub fn save_model(m: &FusionModel, path: &Path) -> Result<()> {
    atomic_write(path, model_to_string(m).as_bytes())
}

pub fn model_from_str(text: &str) -> Result<FusionModel> {
    let mut lines = tokenized_lines(text);
    let (line, header) = lines
        .next()
        .ok_or_else(|| parse_error(0, "empty model file"))?;
    expect_header(&header, line, "fusion-model")?;
    if header.len() != 6 {
        return Err(parse_error(line, "model header needs C, k, R, D"));
    }
    let c = parse_usize(header[2], line, "filter count")?;
    let k = parse_usize(header[3], line, "kernel width")?;
    let r = parse_usize(header[4], line, "region count")?;
    let d = parse_usize(header[5], line, "feature dimension")?;
    if c != CONV_FILTERS || k != KERNEL_WIDTH || r != NUM_REGIONS {
        return Err(parse_error(
            line,
            format!("unsupported geometry {c}x{k}x{r}; this build expects {CONV_FILTERS}x{KERNEL_WIDTH}x{NUM_REGIONS}"),
        ));
    }
    let mut m = FusionModel::zeros(d)?;
    let hidden = m.hidden_len();
    for (line, tokens) in lines {
        match tokens[0] {
            "conv-filter" => {
                if tokens.len() != 2 + NUM_REGIONS * KERNEL_WIDTH {
                    return Err(parse_error(line, "conv-filter record has wrong arity"));
                }
                let f = parse_usize(tokens[1], line, "filter index")?;
                if f >= CONV_FILTERS {
                    return Err(parse_error(line, format!("filter index {f} out of range")));
                }
                for (i, t) in tokens[2..].iter().enumerate() {
                    m.conv_filters[f * NUM_REGIONS * KERNEL_WIDTH + i] =
                        parse_f64(t, line, "filter tap")?;
                }
            }
            "conv-bias" => {
                if tokens.len() != 1 + CONV_FILTERS {
                    return Err(parse_error(line, "conv-bias record has wrong arity"));
                }
                for (i, t) in tokens[1..].iter().enumerate() {
                    m.conv_bias[i] = parse_f64(t, line, "bias")?;
                }
            }
            "fc-row" => {
                if tokens.len() != 2 + hidden {
                    return Err(parse_error(line, "fc-row record has wrong arity"));
                }
                let r = parse_usize(tokens[1], line, "row index")?;
                if r >= NUM_REGIONS {
                    return Err(parse_error(line, format!("fc row {r} out of range")));
                }
                for (i, t) in tokens[2..].iter().enumerate() {
                    m.fc_weights[r * hidden + i] = parse_f64(t, line, "weight")?;
                }
            }
            "fc-bias" => {
                if tokens.len() != 1 + NUM_REGIONS {
                    return Err(parse_error(line, "fc-bias record has wrong arity"));
                }
                for (i, t) in tokens[1..].iter().enumerate() {
                    m.fc_bias[i] = parse_f64(t, line, "bias")?;
                }
            }
            other => return Err(parse_error(line, format!("unknown record '{other}'"))),
        }
    }
    Ok(m)
}

pub fn load_model(path: &Path) -> Result<FusionModel> {
    model_from_str(&fs::read_to_string(path)?)
}
