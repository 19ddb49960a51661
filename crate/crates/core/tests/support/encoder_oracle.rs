//! Scalar-loop reference forward pass over the full padded length, with
//! padded keys masked by `-inf` before the softmax.

use phishguard::textmodel::EncoderParams;

fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + 1e-12).sqrt();
    (0..x.len()).map(|i| (x[i] - mean) * inv * gain[i] + bias[i]).collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / 2f64.sqrt()))
}

pub fn logits(p: &EncoderParams, ids: &[u32], mask: &[u8]) -> [f64; 2] {
    let c = &p.config;
    let (len, d, heads) = (ids.len(), c.d_model, c.num_heads);
    let dh = d / heads;
    let mut h: Vec<Vec<f64>> = (0..len)
        .map(|i| {
            (0..d)
                .map(|k| p.token_embedding[[ids[i] as usize, k]] + p.position_embedding[[i, k]])
                .collect()
        })
        .collect();

    for l in &p.layers {
        let proj = |x: &Vec<Vec<f64>>, w: &ndarray::Array2<f64>, b: &ndarray::Array1<f64>| -> Vec<Vec<f64>> {
            x.iter()
                .map(|row| {
                    (0..w.ncols())
                        .map(|j| b[j] + (0..row.len()).map(|k| row[k] * w[[k, j]]).sum::<f64>())
                        .collect()
                })
                .collect()
        };
        let q = proj(&h, &l.query, &l.query_bias);
        let k = proj(&h, &l.key, &l.key_bias);
        let v = proj(&h, &l.value, &l.value_bias);
        let mut ctx = vec![vec![0.0; d]; len];
        for head in 0..heads {
            let off = head * dh;
            for i in 0..len {
                let scores: Vec<f64> = (0..len)
                    .map(|j| {
                        if mask[j] == 0 {
                            f64::NEG_INFINITY
                        } else {
                            (0..dh).map(|t| q[i][off + t] * k[j][off + t]).sum::<f64>() / (dh as f64).sqrt()
                        }
                    })
                    .collect();
                let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let z: f64 = e.iter().sum();
                for t in 0..dh {
                    ctx[i][off + t] = (0..len).map(|j| e[j] / z * v[j][off + t]).sum();
                }
            }
        }
        let attn = proj(&ctx, &l.output, &l.output_bias);
        let n1: Vec<Vec<f64>> = (0..len)
            .map(|i| {
                let r: Vec<f64> = (0..d).map(|t| h[i][t] + attn[i][t]).collect();
                layer_norm(&r, l.ln1_gain.as_slice().unwrap(), l.ln1_bias.as_slice().unwrap())
            })
            .collect();
        let hidden: Vec<Vec<f64>> = proj(&n1, &l.ff1, &l.ff1_bias)
            .into_iter()
            .map(|r| r.into_iter().map(gelu).collect())
            .collect();
        let ff = proj(&hidden, &l.ff2, &l.ff2_bias);
        h = (0..len)
            .map(|i| {
                let r: Vec<f64> = (0..d).map(|t| n1[i][t] + ff[i][t]).collect();
                layer_norm(&r, l.ln2_gain.as_slice().unwrap(), l.ln2_bias.as_slice().unwrap())
            })
            .collect();
    }
    let mut out = [p.head_bias[0], p.head_bias[1]];
    for (j, o) in out.iter_mut().enumerate() {
        *o += (0..d).map(|t| h[0][t] * p.head[[t, j]]).sum::<f64>();
    }
    out
}
