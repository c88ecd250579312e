use serde::{Deserialize, Serialize};

use super::layers::{affine, affine_backward, dot, relu_in_place};
use super::sigmoid;
use crate::error::{Error, Result};
use crate::featurespace::{EncodedSample, FeatureEncoder, Features};
use crate::numcore::{init_params, Gradients, InitKind, ParamId, ParamSpec, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Dnn,
    WideDeep,
    Dcn,
    Deepfm,
    Pnn,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Dnn => "dnn",
            ModelKind::WideDeep => "wide_deep",
            ModelKind::Dcn => "dcn",
            ModelKind::Deepfm => "deepfm",
            ModelKind::Pnn => "pnn",
        }
    }
}

fn default_embed_dim() -> usize {
    32
}

fn default_hidden() -> Vec<usize> {
    vec![512, 255, 127, 127]
}

fn default_cross_depth() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    /// Cross layers; read only by DCN.
    #[serde(default = "default_cross_depth")]
    pub cross_depth: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::new(ModelKind::Dnn)
    }
}

impl ModelSpec {
    /// Embedding size 32, hidden `[512, 255, 127, 127]`, three cross layers.
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            embed_dim: default_embed_dim(),
            hidden: default_hidden(),
            cross_depth: default_cross_depth(),
        }
    }

    pub fn with_dims(mut self, embed_dim: usize, hidden: &[usize]) -> Self {
        self.embed_dim = embed_dim;
        self.hidden = hidden.to_vec();
        self
    }

    pub fn with_cross_depth(mut self, depth: usize) -> Self {
        self.cross_depth = depth;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if matches!(self.kind, ModelKind::Deepfm | ModelKind::Pnn) {
            return Err(Error::UnsupportedKind(self.kind.as_str().into()));
        }
        if self.embed_dim == 0 {
            return Err(Error::InvalidModelSpec("embed_dim must be >= 1".into()));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidModelSpec("hidden sizes must be positive".into()));
        }
        if self.kind == ModelKind::Dcn && self.cross_depth == 0 {
            return Err(Error::InvalidModelSpec("dcn needs at least one cross layer".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    embeddings: Vec<ParamId>,
    deep: Vec<(ParamId, ParamId)>,
    cross: Vec<(ParamId, ParamId)>,
    wide_tables: Vec<ParamId>,
    wide_dense: Option<ParamId>,
    head_w: ParamId,
    head_b: ParamId,
}

/// A backbone bound to a fitted feature layout, with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    field_names: Vec<String>,
    table_sizes: Vec<usize>,
    n_categorical: usize,
    params: ParamStore,
    layout: Layout,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    rows: usize,
    ids: Vec<u32>,
    x0: Vec<f64>,
    deep: Vec<Vec<f64>>,
    cross: Vec<Vec<f64>>,
    cross_dots: Vec<Vec<f64>>,
    head_in: Vec<f64>,
    logits: Vec<f64>,
}

impl ForwardPass {
    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.logits.iter().map(|&z| sigmoid(z)).collect()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Output of the last cross layer (DCN only), row-major.
    pub fn cross_output(&self) -> Option<&[f64]> {
        self.cross.last().map(Vec::as_slice)
    }

    /// The shared input row block `x0`, row-major.
    pub fn input(&self) -> &[f64] {
        &self.x0
    }
}

impl Model {
    pub fn build(spec: &ModelSpec, encoder: &FeatureEncoder, seed: u64) -> Result<Self> {
        let field_names = encoder.schema.fields.iter().map(|f| f.name.clone()).collect();
        Self::build_raw(spec, field_names, encoder.table_sizes(), encoder.n_categorical(), seed)
    }

    /// Builds from bare table sizes: the first `n_categorical` tables are
    /// categorical vocabularies, the rest numerical bucket tables.
    pub fn build_raw(
        spec: &ModelSpec,
        field_names: Vec<String>,
        table_sizes: Vec<usize>,
        n_categorical: usize,
        seed: u64,
    ) -> Result<Self> {
        spec.validate()?;
        let layout = param_layout(spec, &field_names, &table_sizes, n_categorical)?;
        let params = init_params(&layout, seed)?;
        Self::from_params(spec.clone(), field_names, table_sizes, n_categorical, params)
    }

    /// Rebinds stored parameters; every expected tensor must be present with
    /// the expected shape.
    pub fn from_params(
        spec: ModelSpec,
        field_names: Vec<String>,
        table_sizes: Vec<usize>,
        n_categorical: usize,
        params: ParamStore,
    ) -> Result<Self> {
        spec.validate()?;
        let expected = param_layout(&spec, &field_names, &table_sizes, n_categorical)?;
        if expected.len() != params.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, found {}",
                expected.len(),
                params.len()
            )));
        }
        for p in &expected {
            let t = params
                .by_name(&p.name)
                .ok_or_else(|| Error::UnknownParam(p.name.clone()))?;
            if t.shape() != p.shape.as_slice() {
                return Err(Error::ShapeMismatch(format!(
                    "`{}` has shape {:?}, expected {:?}",
                    p.name,
                    t.shape(),
                    p.shape
                )));
            }
        }
        let layout = resolve_layout(&spec, &field_names, n_categorical, &params)?;
        Ok(Self {
            spec,
            field_names,
            table_sizes,
            n_categorical,
            params,
            layout,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn field_names(&self) -> &[String] {
        &self.field_names
    }

    pub fn table_sizes(&self) -> &[usize] {
        &self.table_sizes
    }

    pub fn n_categorical(&self) -> usize {
        self.n_categorical
    }

    pub fn n_numerical(&self) -> usize {
        self.table_sizes.len() - self.n_categorical
    }

    /// Width of `x0`: `(M + N) * d + N`.
    pub fn input_width(&self) -> usize {
        self.table_sizes.len() * self.spec.embed_dim + self.n_numerical()
    }

    /// Sigmoid probabilities for a batch of encoded samples.
    pub fn predict(&self, batch: &[EncodedSample]) -> Result<Vec<f64>> {
        let rows: Vec<&Features> = batch.iter().map(|s| &s.features).collect();
        Ok(self.forward(&rows)?.probabilities())
    }

    pub fn logits(&self, rows: &[&Features]) -> Result<Vec<f64>> {
        Ok(self.forward(rows)?.logits)
    }

    pub fn probabilities(&self, rows: &[&Features]) -> Result<Vec<f64>> {
        Ok(self.forward(rows)?.probabilities())
    }

    fn check_row(&self, f: &Features) -> Result<()> {
        let n_num = self.n_numerical();
        if f.cat_ids.len() != self.n_categorical
            || f.bucket_ids.len() != n_num
            || f.dense.len() != n_num
        {
            return Err(Error::ShapeMismatch(format!(
                "row has {}/{}/{} categorical/bucket/dense values, model expects {}/{}/{}",
                f.cat_ids.len(),
                f.bucket_ids.len(),
                f.dense.len(),
                self.n_categorical,
                n_num,
                n_num
            )));
        }
        let ids = f.cat_ids.iter().chain(&f.bucket_ids);
        for (t, (&id, &size)) in ids.zip(&self.table_sizes).enumerate() {
            if id as usize >= size {
                return Err(Error::ShapeMismatch(format!(
                    "id {id} out of range for table `{}` of size {size}",
                    self.field_names[t]
                )));
            }
        }
        if f.dense.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dense input".into()));
        }
        Ok(())
    }

    pub fn forward(&self, rows: &[&Features]) -> Result<ForwardPass> {
        if rows.is_empty() {
            return Err(Error::ShapeMismatch("empty batch".into()));
        }
        let n_tables = self.table_sizes.len();
        let width = self.input_width();
        let b = rows.len();

        let mut ids = Vec::with_capacity(b * n_tables);
        let mut x0 = Vec::with_capacity(b * width);
        for f in rows {
            self.check_row(f)?;
            for (t, &id) in f.cat_ids.iter().chain(&f.bucket_ids).enumerate() {
                ids.push(id);
                let table = self.params.get(self.layout.embeddings[t]);
                x0.extend_from_slice(table.row(id as usize));
            }
            x0.extend_from_slice(&f.dense);
        }
        debug_assert_eq!(x0.len(), b * width);

        let mut deep = Vec::with_capacity(self.layout.deep.len());
        let mut n_in = width;
        for (l, &(w, bias)) in self.layout.deep.iter().enumerate() {
            let input = if l == 0 { &x0 } else { &deep[l - 1] };
            let mut out = Vec::new();
            affine(input, n_in, self.params.get(w).data(), self.params.get(bias).data(), &mut out);
            relu_in_place(&mut out);
            n_in = self.params.get(bias).len();
            deep.push(out);
        }

        let mut cross = Vec::with_capacity(self.layout.cross.len());
        let mut cross_dots = Vec::with_capacity(self.layout.cross.len());
        for (l, &(w, bias)) in self.layout.cross.iter().enumerate() {
            let prev = if l == 0 { &x0 } else { &cross[l - 1] };
            let w = self.params.get(w).data();
            let bias = self.params.get(bias).data();
            let mut out = Vec::with_capacity(b * width);
            let mut dots = Vec::with_capacity(b);
            for r in 0..b {
                let xl = &prev[r * width..(r + 1) * width];
                let x0r = &x0[r * width..(r + 1) * width];
                let s = dot(xl, w);
                dots.push(s);
                out.extend((0..width).map(|k| x0r[k] * s + bias[k] + xl[k]));
            }
            cross.push(out);
            cross_dots.push(dots);
        }

        let head_in = self.head_input(b, &x0, &deep, &cross);
        let head_w = self.params.get(self.layout.head_w).data();
        let head_b = self.params.get(self.layout.head_b).data()[0];
        let head_width = head_w.len();
        let mut logits: Vec<f64> = (0..b)
            .map(|r| head_b + dot(&head_in[r * head_width..(r + 1) * head_width], head_w))
            .collect();

        if let Some(wd) = self.layout.wide_dense {
            let wd = self.params.get(wd).data();
            for (r, f) in rows.iter().enumerate() {
                let mut wide = dot(&f.dense, wd);
                for (t, &id) in f.cat_ids.iter().enumerate() {
                    wide += self.params.get(self.layout.wide_tables[t]).data()[id as usize];
                }
                logits[r] += wide;
            }
        }

        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("logit".into()));
        }
        Ok(ForwardPass {
            rows: b,
            ids,
            x0,
            deep,
            cross,
            cross_dots,
            head_in,
            logits,
        })
    }

    fn head_input(&self, b: usize, x0: &[f64], deep: &[Vec<f64>], cross: &[Vec<f64>]) -> Vec<f64> {
        match self.spec.kind {
            ModelKind::Dcn => {
                let width = self.input_width();
                let xl = cross.last().expect("dcn has cross layers");
                match deep.last() {
                    None => xl.clone(),
                    Some(h) => {
                        let hw = h.len() / b;
                        let mut out = Vec::with_capacity(b * (width + hw));
                        for r in 0..b {
                            out.extend_from_slice(&xl[r * width..(r + 1) * width]);
                            out.extend_from_slice(&h[r * hw..(r + 1) * hw]);
                        }
                        out
                    }
                }
            }
            _ => deep.last().map_or_else(|| x0.to_vec(), Clone::clone),
        }
    }

    /// Gradients of `sum_r dlogits[r] * logit_r` with respect to every
    /// parameter. Callers fold the loss derivative (and any `1/B`) into
    /// `dlogits`.
    pub fn backward(&self, pass: &ForwardPass, dlogits: &[f64]) -> Result<Gradients> {
        if dlogits.len() != pass.rows {
            return Err(Error::ShapeMismatch(format!(
                "{} logit gradients for {} rows",
                dlogits.len(),
                pass.rows
            )));
        }
        if dlogits.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("logit gradient".into()));
        }
        let b = pass.rows;
        let d = self.spec.embed_dim;
        let width = self.input_width();
        let n_tables = self.table_sizes.len();
        let mut grads = self.params.zero_grads();

        // Head.
        let head_w = self.params.get(self.layout.head_w).data();
        let head_width = head_w.len();
        {
            let gw = grads.get_mut(self.layout.head_w).data_mut();
            for r in 0..b {
                let hin = &pass.head_in[r * head_width..(r + 1) * head_width];
                for (g, x) in gw.iter_mut().zip(hin) {
                    *g += x * dlogits[r];
                }
            }
        }
        grads.get_mut(self.layout.head_b).data_mut()[0] = dlogits.iter().sum();
        let mut d_head_in = vec![0.0; b * head_width];
        for r in 0..b {
            for (k, w) in head_w.iter().enumerate() {
                d_head_in[r * head_width + k] = w * dlogits[r];
            }
        }

        // Wide part.
        if let Some(wd) = self.layout.wide_dense {
            let n_num = self.n_numerical();
            for r in 0..b {
                let dense = &pass.x0[r * width + n_tables * d..(r + 1) * width];
                let gwd = grads.get_mut(wd).data_mut();
                for j in 0..n_num {
                    gwd[j] += dense[j] * dlogits[r];
                }
                for t in 0..self.n_categorical {
                    let id = pass.ids[r * n_tables + t] as usize;
                    grads.get_mut(self.layout.wide_tables[t]).data_mut()[id] += dlogits[r];
                }
            }
        }

        let mut dx0 = vec![0.0; b * width];

        // Split the head gradient into its cross and deep parts.
        let (d_cross_out, d_deep_out) = match self.spec.kind {
            ModelKind::Dcn => {
                let deep_w = head_width - width;
                let mut dc = Vec::with_capacity(b * width);
                let mut dd = Vec::with_capacity(b * deep_w);
                for r in 0..b {
                    let row = &d_head_in[r * head_width..(r + 1) * head_width];
                    dc.extend_from_slice(&row[..width]);
                    dd.extend_from_slice(&row[width..]);
                }
                (Some(dc), if self.layout.deep.is_empty() { None } else { Some(dd) })
            }
            _ => {
                if self.layout.deep.is_empty() {
                    for (a, g) in dx0.iter_mut().zip(&d_head_in) {
                        *a += g;
                    }
                    (None, None)
                } else {
                    (None, Some(d_head_in))
                }
            }
        };

        // Deep tower.
        if let Some(mut dout) = d_deep_out {
            for l in (0..self.layout.deep.len()).rev() {
                let (w_id, b_id) = self.layout.deep[l];
                let out = &pass.deep[l];
                for (g, &o) in dout.iter_mut().zip(out) {
                    if o <= 0.0 {
                        *g = 0.0;
                    }
                }
                let (input, n_in) = if l == 0 {
                    (&pass.x0, width)
                } else {
                    (&pass.deep[l - 1], pass.deep[l - 1].len() / b)
                };
                let n_out = out.len() / b;
                let w = self.params.get(w_id).data();
                let mut dx = Vec::new();
                {
                    let mut dw = vec![0.0; w.len()];
                    let mut db = vec![0.0; n_out];
                    affine_backward(input, n_in, w, &dout, n_out, &mut dw, &mut db, Some(&mut dx));
                    grads.get_mut(w_id).data_mut().copy_from_slice(&dw);
                    grads.get_mut(b_id).data_mut().copy_from_slice(&db);
                }
                if l == 0 {
                    for (a, g) in dx0.iter_mut().zip(&dx) {
                        *a += g;
                    }
                }
                dout = dx;
            }
        }

        // Cross tower.
        if let Some(mut g_next) = d_cross_out {
            for l in (0..self.layout.cross.len()).rev() {
                let (w_id, b_id) = self.layout.cross[l];
                let w = self.params.get(w_id).data();
                let prev = if l == 0 { &pass.x0 } else { &pass.cross[l - 1] };
                let mut g_prev = vec![0.0; b * width];
                for r in 0..b {
                    let g = &g_next[r * width..(r + 1) * width];
                    let x0r = &pass.x0[r * width..(r + 1) * width];
                    let xl = &prev[r * width..(r + 1) * width];
                    let s = pass.cross_dots[l][r];
                    let ds = dot(g, x0r);
                    {
                        let gb = grads.get_mut(b_id).data_mut();
                        for (a, v) in gb.iter_mut().zip(g) {
                            *a += v;
                        }
                    }
                    {
                        let gw = grads.get_mut(w_id).data_mut();
                        for (a, v) in gw.iter_mut().zip(xl) {
                            *a += ds * v;
                        }
                    }
                    let gp = &mut g_prev[r * width..(r + 1) * width];
                    let dx0r = &mut dx0[r * width..(r + 1) * width];
                    for k in 0..width {
                        gp[k] = g[k] + ds * w[k];
                        dx0r[k] += g[k] * s;
                    }
                }
                g_next = g_prev;
            }
            for (a, g) in dx0.iter_mut().zip(&g_next) {
                *a += g;
            }
        }

        // Scatter into embedding rows.
        for r in 0..b {
            for t in 0..n_tables {
                let id = pass.ids[r * n_tables + t] as usize;
                let src = &dx0[r * width + t * d..r * width + (t + 1) * d];
                let table = grads.get_mut(self.layout.embeddings[t]).data_mut();
                for (a, g) in table[id * d..(id + 1) * d].iter_mut().zip(src) {
                    *a += g;
                }
            }
        }
        Ok(grads)
    }
}

fn param_layout(
    spec: &ModelSpec,
    field_names: &[String],
    table_sizes: &[usize],
    n_categorical: usize,
) -> Result<Vec<ParamSpec>> {
    if field_names.len() != table_sizes.len() || n_categorical > table_sizes.len() {
        return Err(Error::InvalidModelSpec(
            "field names and table sizes disagree".into(),
        ));
    }
    let d = spec.embed_dim;
    let n_num = table_sizes.len() - n_categorical;
    let width = table_sizes.len() * d + n_num;
    let mut layout = Vec::new();
    for (name, &size) in field_names.iter().zip(table_sizes) {
        layout.push(ParamSpec::new(
            format!("embedding.{name}"),
            &[size, d],
            InitKind::XavierUniform,
        ));
    }
    let mut n_in = width;
    for (l, &h) in spec.hidden.iter().enumerate() {
        layout.push(ParamSpec::new(format!("deep.{l}.weight"), &[n_in, h], InitKind::XavierUniform));
        layout.push(ParamSpec::new(format!("deep.{l}.bias"), &[h], InitKind::Zeros));
        n_in = h;
    }
    let deep_out = spec.hidden.last().copied();
    let head_width = match spec.kind {
        ModelKind::Dcn => {
            for l in 0..spec.cross_depth {
                layout.push(ParamSpec::new(
                    format!("cross.{l}.weight"),
                    &[width],
                    InitKind::XavierUniform,
                ));
                layout.push(ParamSpec::new(format!("cross.{l}.bias"), &[width], InitKind::Zeros));
            }
            width + deep_out.unwrap_or(0)
        }
        _ => deep_out.unwrap_or(width),
    };
    if spec.kind == ModelKind::WideDeep {
        for (name, &size) in field_names.iter().zip(table_sizes).take(n_categorical) {
            layout.push(ParamSpec::new(format!("wide.{name}"), &[size], InitKind::Zeros));
        }
        if n_num > 0 {
            layout.push(ParamSpec::new("wide.dense", &[n_num], InitKind::Zeros));
        }
    }
    layout.push(ParamSpec::new("head.weight", &[head_width], InitKind::XavierUniform));
    layout.push(ParamSpec::new("head.bias", &[1], InitKind::Zeros));
    Ok(layout)
}

fn resolve_layout(
    spec: &ModelSpec,
    field_names: &[String],
    n_categorical: usize,
    params: &ParamStore,
) -> Result<Layout> {
    let embeddings = field_names
        .iter()
        .map(|n| params.id(&format!("embedding.{n}")))
        .collect::<Result<_>>()?;
    let deep = (0..spec.hidden.len())
        .map(|l| Ok((params.id(&format!("deep.{l}.weight"))?, params.id(&format!("deep.{l}.bias"))?)))
        .collect::<Result<_>>()?;
    let cross = if spec.kind == ModelKind::Dcn {
        (0..spec.cross_depth)
            .map(|l| {
                Ok((params.id(&format!("cross.{l}.weight"))?, params.id(&format!("cross.{l}.bias"))?))
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let (wide_tables, wide_dense) = if spec.kind == ModelKind::WideDeep {
        let tables = field_names[..n_categorical]
            .iter()
            .map(|n| params.id(&format!("wide.{n}")))
            .collect::<Result<_>>()?;
        let dense = if field_names.len() > n_categorical {
            Some(params.id("wide.dense")?)
        } else {
            None
        };
        (tables, dense)
    } else {
        (Vec::new(), None)
    };
    Ok(Layout {
        embeddings,
        deep,
        cross,
        wide_tables,
        wide_dense,
        head_w: params.id("head.weight")?,
        head_b: params.id("head.bias")?,
    })
}
