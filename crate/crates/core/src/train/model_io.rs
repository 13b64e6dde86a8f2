use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2, Array3};

use crate::error::{Error, Result};
use crate::gcnn::{build_hierarchy, Architecture, DenseParams, GcnnModel, SpectralConvParams, PARAM_GROUPS};
use crate::graph::CoarseningHierarchy;
use crate::io_util::write_atomic;
use crate::slt::fmt_f64;
use crate::streamline::NormalizationTransform;

const MAGIC: &str = "GCM";
const VERSION: &str = "1";

fn tensor_dims(model: &GcnnModel) -> [Vec<usize>; 6] {
    [
        model.conv1.filters.shape().to_vec(),
        model.conv2.filters.shape().to_vec(),
        model.fc.weight.shape().to_vec(),
        model.fc.bias.shape().to_vec(),
        model.out.weight.shape().to_vec(),
        model.out.bias.shape().to_vec(),
    ]
}

/// Renders a model in the `GCM 1` text format.
pub fn format_gcm(model: &GcnnModel) -> String {
    let mut out = String::new();
    let a = &model.arch;
    let n = &model.normalization;
    writeln!(out, "{MAGIC} {VERSION}").unwrap();
    writeln!(out, "bundle {}", model.bundle).unwrap();
    let norm: Vec<String> = n.offset.iter().chain(&n.scale).map(|&v| fmt_f64(v)).collect();
    writeln!(out, "norm {}", norm.join(" ")).unwrap();
    writeln!(
        out,
        "arch {} {} {} {} {} {}",
        a.num_nodes, a.num_levels, a.conv1_channels, a.conv2_channels, a.hidden, a.classes
    )
    .unwrap();
    for ((name, values), dims) in model.param_groups().iter().zip(tensor_dims(model)) {
        let dims_s: Vec<String> = dims.iter().map(usize::to_string).collect();
        writeln!(out, "tensor {name} {}", dims_s.join(" ")).unwrap();
        let row = *dims.last().unwrap_or(&1);
        for chunk in values.chunks(row.max(1)) {
            let line: Vec<String> = chunk.iter().map(|&v| fmt_f64(v)).collect();
            writeln!(out, "{}", line.join(" ")).unwrap();
        }
    }
    out
}

pub fn serialize_model(model: &GcnnModel, path: &Path) -> Result<()> {
    model.validate()?;
    if model.bundle.is_empty() || model.bundle.chars().any(char::is_whitespace) {
        return Err(Error::InvalidArgument(format!(
            "bundle name `{}` must be non-empty without whitespace",
            model.bundle
        )));
    }
    write_atomic(path, format_gcm(model).as_bytes())
}

pub fn deserialize_model(path: &Path) -> Result<GcnnModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_gcm(&text, None)
}

/// Token stream over the non-blank lines of a file, remembering line numbers.
struct Tokens<'a> {
    lines: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, &'a str)>> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.trim()))
                .filter(|(_, l)| !l.is_empty()),
        );
        Self { lines: it.peekable() }
    }

    fn line(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        match self.lines.next() {
            Some((n, l)) => Ok((n, l.split_whitespace().collect())),
            None => Err(Error::parse(0, format!("truncated file: expected {what}"))),
        }
    }

    /// A header line `<keyword> <fields...>`.
    fn keyed(&mut self, keyword: &str) -> Result<(usize, Vec<&'a str>)> {
        let (n, toks) = self.line(&format!("`{keyword}` line"))?;
        if toks.first() != Some(&keyword) {
            return Err(Error::parse(n, format!("expected `{keyword}` line")));
        }
        Ok((n, toks[1..].to_vec()))
    }

    /// Reads `count` floats spanning any number of lines.
    fn floats(&mut self, count: usize, name: &str) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let Some(&(n, l)) = self.lines.peek() else {
                return Err(Error::parse(
                    0,
                    format!("truncated file: tensor {name} has {} of {count} values", out.len()),
                ));
            };
            if l.starts_with("tensor") {
                return Err(Error::parse(
                    n,
                    format!("tensor {name} has {} of {count} values", out.len()),
                ));
            }
            self.lines.next();
            for tok in l.split_whitespace() {
                if out.len() == count {
                    return Err(Error::parse(n, format!("tensor {name} has more than {count} values")));
                }
                out.push(parse_f64(n, tok)?);
            }
        }
        Ok(out)
    }
}

fn parse_f64(line: usize, tok: &str) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid number `{tok}`")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite value `{tok}`")));
    }
    Ok(v)
}

fn parse_usize(line: usize, tok: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| Error::parse(line, format!("invalid integer `{tok}`")))
}

/// Parses a `GCM 1` model. `hierarchy` is reused when given (it must match
/// the stored architecture); otherwise it is rebuilt from the architecture.
pub fn parse_gcm(text: &str, hierarchy: Option<Arc<CoarseningHierarchy>>) -> Result<GcnnModel> {
    let mut t = Tokens::new(text);

    let (n, head) = t.line("header")?;
    if head.first() != Some(&MAGIC) || head.len() != 2 {
        return Err(Error::parse(n, "expected `GCM <version>` header"));
    }
    if head[1] != VERSION {
        return Err(Error::Version(head[1].to_string()));
    }

    let (n, bundle) = t.keyed("bundle")?;
    if bundle.len() != 1 {
        return Err(Error::parse(n, "bundle line needs exactly one name"));
    }
    let bundle = bundle[0].to_string();

    let (n, norm) = t.keyed("norm")?;
    if norm.len() != 6 {
        return Err(Error::parse(n, format!("norm line needs 6 values, got {}", norm.len())));
    }
    let norm = norm.iter().map(|s| parse_f64(n, s)).collect::<Result<Vec<_>>>()?;
    let normalization = NormalizationTransform::new([norm[0], norm[1], norm[2]], [norm[3], norm[4], norm[5]])?;

    let (n, arch_f) = t.keyed("arch")?;
    if arch_f.len() != 6 {
        return Err(Error::parse(n, format!("arch line needs 6 integers, got {}", arch_f.len())));
    }
    let v = arch_f.iter().map(|s| parse_usize(n, s)).collect::<Result<Vec<_>>>()?;
    let arch = Architecture {
        num_nodes: v[0],
        num_levels: v[1],
        conv1_channels: v[2],
        conv2_channels: v[3],
        hidden: v[4],
        classes: v[5],
    };
    arch.validate().map_err(|e| Error::Inconsistent(e.to_string()))?;

    let hierarchy = match hierarchy {
        Some(h) => {
            if h.num_nodes() != arch.num_nodes || h.num_levels() != arch.num_levels {
                return Err(Error::Inconsistent("supplied hierarchy does not match the architecture".into()));
            }
            h
        }
        None => build_hierarchy(&arch)?,
    };
    let flat = hierarchy.levels[2].padded_len() * arch.conv2_channels;
    let expected: [Vec<usize>; 6] = [
        vec![arch.conv1_channels, crate::gcnn::INPUT_CHANNELS, hierarchy.levels[0].padded_len()],
        vec![arch.conv2_channels, arch.conv1_channels, hierarchy.levels[1].padded_len()],
        vec![arch.hidden, flat],
        vec![arch.hidden],
        vec![arch.classes, arch.hidden],
        vec![arch.classes],
    ];

    let mut tensors: Vec<Vec<f64>> = Vec::with_capacity(6);
    for (name, want) in PARAM_GROUPS.iter().zip(&expected) {
        let (n, fields) = t.keyed("tensor")?;
        if fields.first() != Some(name) {
            return Err(Error::parse(n, format!("expected tensor {name}")));
        }
        let dims = fields[1..].iter().map(|s| parse_usize(n, s)).collect::<Result<Vec<_>>>()?;
        if &dims != want {
            return Err(Error::Inconsistent(format!(
                "tensor {name} declared as {dims:?}, architecture requires {want:?}"
            )));
        }
        tensors.push(t.floats(want.iter().product(), name)?);
    }
    if let Some((n, _)) = t.lines.next() {
        return Err(Error::parse(n, "unexpected content after last tensor"));
    }

    let mut it = tensors.into_iter();
    let mut next3 = |d: &[usize]| Array3::from_shape_vec((d[0], d[1], d[2]), it.next().unwrap()).unwrap();
    let conv1 = next3(&expected[0]);
    let conv2 = next3(&expected[1]);
    let fc_w = Array2::from_shape_vec((expected[2][0], expected[2][1]), it.next().unwrap()).unwrap();
    let fc_b = Array1::from_vec(it.next().unwrap());
    let out_w = Array2::from_shape_vec((expected[4][0], expected[4][1]), it.next().unwrap()).unwrap();
    let out_b = Array1::from_vec(it.next().unwrap());

    let model = GcnnModel {
        arch,
        hierarchy,
        conv1: SpectralConvParams { level: 0, filters: conv1 },
        conv2: SpectralConvParams { level: 1, filters: conv2 },
        fc: DenseParams { weight: fc_w, bias: fc_b },
        out: DenseParams { weight: out_w, bias: out_b },
        normalization,
        bundle,
    };
    model.validate()?;
    Ok(model)
}
