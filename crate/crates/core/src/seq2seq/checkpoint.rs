//! Plain-text checkpoint format.
//!
//! ```text
//! softdecode-checkpoint v1
//! model src_vocab=20 tgt_vocab=20 embed=16 hidden=32 attention=fixed bidirectional=true
//! param <name> <rows> <cols>
//! <rows*cols IEEE-754 binary64 bit patterns, 16 hex digits each, space separated>
//! ...
//! ```
//!
//! Values are widened to `f64` before encoding, which is exact for both
//! supported scalar types, so a save/load round trip is bit-exact.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::{ModelConfig, Param, Seq2Seq};
use crate::error::{Error, Result, Shape};
use crate::scalar::Scalar;

const MAGIC: &str = "softdecode-checkpoint v1";

pub fn write_checkpoint<T: Scalar, W: Write>(model: &Seq2Seq<T>, mut out: W) -> std::io::Result<()> {
    let c = model.config();
    writeln!(out, "{MAGIC}")?;
    writeln!(
        out,
        "model src_vocab={} tgt_vocab={} embed={} hidden={} attention={} bidirectional={}",
        c.src_vocab, c.tgt_vocab, c.embed, c.hidden, c.attention, c.bidirectional
    )?;
    for p in model.params() {
        writeln!(out, "param {} {} {}", p.name, p.shape.rows, p.shape.cols)?;
        let words: Vec<String> = p
            .data
            .iter()
            .map(|v| format!("{:016x}", v.to_f64_lossless().to_bits()))
            .collect();
        writeln!(out, "{}", words.join(" "))?;
    }
    Ok(())
}

pub fn save_checkpoint<T: Scalar>(model: &Seq2Seq<T>, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(model, &mut buf).expect("writing to memory");
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint<T: Scalar, R: BufRead>(input: R, origin: &Path) -> Result<Seq2Seq<T>> {
    let fail = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((n, Ok(l))) => Ok((n, l)),
            Some((n, Err(e))) => Err(fail(n, e.to_string())),
            None => Err(fail(0, format!("unexpected end of file, expected {what}"))),
        }
    };

    let (n, magic) = next("header")?;
    if magic.trim() != MAGIC {
        return Err(fail(n, format!("bad header `{magic}`")));
    }
    let (n, model_line) = next("model line")?;
    let config = parse_model_line(&model_line).map_err(|m| fail(n, m))?;

    let mut params = Vec::new();
    while let Ok((n, header)) = next("param") {
        if header.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = header.split_whitespace().collect();
        let [tag, name, rows, cols] = fields[..] else {
            return Err(fail(n, format!("bad param header `{header}`")));
        };
        if tag != "param" {
            return Err(fail(n, format!("expected `param`, found `{tag}`")));
        }
        let parse_dim = |s: &str| s.parse::<usize>().map_err(|e| fail(n, e.to_string()));
        let shape = Shape::matrix(parse_dim(rows)?, parse_dim(cols)?);
        let (n, body) = next("parameter values")?;
        let data = body
            .split_whitespace()
            .map(|w| {
                u64::from_str_radix(w, 16)
                    .map(|bits| T::from_f64(f64::from_bits(bits)).expect("f64 to scalar"))
                    .map_err(|e| fail(n, format!("bad value `{w}`: {e}")))
            })
            .collect::<Result<Vec<T>>>()?;
        if data.len() != shape.len() {
            return Err(fail(
                n,
                format!("`{name}` expects {} values, found {}", shape.len(), data.len()),
            ));
        }
        params.push(Param {
            name: name.to_string(),
            shape,
            data,
        });
    }
    Seq2Seq::from_params(config, params)
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Seq2Seq<T>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file), path)
}

fn parse_model_line(line: &str) -> std::result::Result<ModelConfig, String> {
    let mut fields = line.split_whitespace();
    if fields.next() != Some("model") {
        return Err(format!("expected model line, found `{line}`"));
    }
    let mut config = ModelConfig::new(0, 0);
    for field in fields {
        let (key, value) = field.split_once('=').ok_or_else(|| format!("bad field `{field}`"))?;
        let num = || value.parse::<usize>().map_err(|e| format!("{key}: {e}"));
        match key {
            "src_vocab" => config.src_vocab = num()?,
            "tgt_vocab" => config.tgt_vocab = num()?,
            "embed" => config.embed = num()?,
            "hidden" => config.hidden = num()?,
            "attention" => config.attention = value.parse().map_err(|e: Error| e.to_string())?,
            "bidirectional" => config.bidirectional = value.parse().map_err(|e| format!("{key}: {e}"))?,
            other => return Err(format!("unknown model field `{other}`")),
        }
    }
    Ok(config)
}
