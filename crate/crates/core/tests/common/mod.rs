//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use pide_backstep::Container;
use serde_json::Value;

/// Trapezoid weight of node `m` on `[a, b]` (in index units), zero for an empty interval.
fn tw(m: usize, a: usize, b: usize) -> f64 {
    if a == b {
        0.0
    } else if m == a || m == b {
        0.5
    } else {
        1.0
    }
}

fn upper_index(n: usize) -> Vec<Vec<Option<usize>>> {
    let mut idx = vec![vec![None; n]; n];
    let mut c = 0;
    for (i, row) in idx.iter_mut().enumerate() {
        for cell in row.iter_mut().skip(i) {
            *cell = Some(c);
            c += 1;
        }
    }
    idx
}

fn solve_dense(a: DMatrix<f64>, b: DVector<f64>) -> DVector<f64> {
    a.lu().solve(&b).expect("nonsingular oracle system")
}

/// `B = K + ∫_s^q K(s,a) B(a,q) da` on the grid, as one dense linear system.
pub fn dense_resolvent(k: &Array2<f64>, ds: f64) -> Array2<f64> {
    let n = k.nrows();
    let idx = upper_index(n);
    let m = n * (n + 1) / 2;
    let mut a = DMatrix::<f64>::identity(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    for i in 0..n {
        for j in i..n {
            let row = idx[i][j].unwrap();
            rhs[row] = k[[i, j]];
            for r in i..=j {
                a[(row, idx[r][j].unwrap())] -= ds * tw(r, i, j) * k[[i, r]];
            }
        }
    }
    let x = solve_dense(a, rhs);
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            out[[i, j]] = x[idx[i][j].unwrap()];
        }
    }
    out
}

/// `X(s,r) = force(s,r) + ∫_s^1 K(s,a) X(a,r) da`, column by column.
pub fn dense_full_resolvent(k: &Array2<f64>, force: &Array2<f64>, ds: f64) -> Array2<f64> {
    let n = k.nrows();
    let mut a = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for r in i..n {
            a[(i, r)] -= ds * tw(r, i, n - 1) * k[[i, r]];
        }
    }
    let lu = a.lu();
    let mut out = Array2::zeros((n, n));
    for col in 0..n {
        let b = DVector::from_iterator(n, (0..n).map(|i| force[[i, col]]));
        let x = lu.solve(&b).expect("nonsingular");
        for i in 0..n {
            out[[i, col]] = x[i];
        }
    }
    out
}

/// `F_s + F_q = sign ∫_s^q f(s,a) F(a,q) da - f`, `F(0,q) = 0`, trapezoid along each
/// diagonal, assembled as a single dense system.
pub fn dense_observer_f(f: &Array2<f64>, ds: f64, sign: f64) -> Array2<f64> {
    let n = f.nrows();
    let idx = upper_index(n);
    let m = n * (n + 1) / 2;
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    // adds coeff * (sign G(p,q) - f(p,q)) to equation `row`
    let add_r = |a: &mut DMatrix<f64>,
                 rhs: &mut DVector<f64>,
                 row: usize,
                 coeff: f64,
                 p: usize,
                 q: usize| {
        rhs[row] -= coeff * f[[p, q]];
        for r in p..=q {
            a[(row, idx[r][q].unwrap())] -= coeff * sign * ds * tw(r, p, q) * f[[p, r]];
        }
    };
    for i in 0..n {
        for j in i..n {
            let row = idx[i][j].unwrap();
            a[(row, row)] += 1.0;
            if i == 0 {
                continue;
            }
            a[(row, idx[i - 1][j - 1].unwrap())] -= 1.0;
            add_r(&mut a, &mut rhs, row, 0.5 * ds, i - 1, j - 1);
            add_r(&mut a, &mut rhs, row, 0.5 * ds, i, j);
        }
    }
    let x = solve_dense(a, rhs);
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            out[[i, j]] = x[idx[i][j].unwrap()];
        }
    }
    out
}

/// Composite Simpson rule with `2 * half_intervals` panels.
pub fn simpson(g: impl Fn(f64) -> f64, a: f64, b: f64, half_intervals: usize) -> f64 {
    let m = 2 * half_intervals;
    let h = (b - a) / m as f64;
    let mut acc = g(a) + g(b);
    for k in 1..m {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * g(a + k as f64 * h);
    }
    acc * h / 3.0
}

fn act(tag: &Value, v: f64) -> f64 {
    match tag.as_str().unwrap() {
        "relu" => v.max(0.0),
        "tanh" => v.tanh(),
        "linear" => v,
        other => panic!("unknown activation {other}"),
    }
}

/// DeepONet evaluated from the raw container, reading only the JSON config and tensors.
pub fn straight_line_deeponet(weights: &Container, encoding: &[f64], queries: &[f64]) -> Vec<f64> {
    let cfg = &weights.meta["deeponet_config"];
    let get = |key: &str| cfg[key].as_u64().unwrap() as usize;
    let list = |key: &str| -> Vec<usize> {
        cfg[key]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_u64().unwrap() as usize)
            .collect()
    };
    let (k, stride, pad) = (get("kernel_size"), get("stride"), get("padding") as i64);
    let btags = cfg["branch_activations"].as_array().unwrap();
    let ttags = cfg["trunk_activations"].as_array().unwrap();
    let t = |name: &str| {
        &weights
            .get(name)
            .unwrap_or_else(|| panic!("missing {name}"))
            .data
    };

    let mut side = get("grid");
    let mut channels = get("input_channels");
    let mut x = encoding.to_vec();
    let mut layer = 0;
    for (l, out_c) in list("conv_channels").into_iter().enumerate() {
        let w = t(&format!("branch.conv{l}.weight"));
        let b = t(&format!("branch.conv{l}.bias"));
        let out_side = (side + 2 * pad as usize - k) / stride + 1;
        let mut y = Vec::with_capacity(out_c * out_side * out_side);
        for o in 0..out_c {
            for oy in 0..out_side {
                for ox in 0..out_side {
                    let mut acc = b[o];
                    for c in 0..channels {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as i64 - pad;
                                let ix = (ox * stride + kx) as i64 - pad;
                                if iy >= 0
                                    && ix >= 0
                                    && (iy as usize) < side
                                    && (ix as usize) < side
                                {
                                    let wv = w[o * channels * k * k + c * k * k + ky * k + kx];
                                    acc +=
                                        wv * x[c * side * side + iy as usize * side + ix as usize];
                                }
                            }
                        }
                    }
                    y.push(act(&btags[layer], acc));
                }
            }
        }
        x = y;
        side = out_side;
        channels = out_c;
        layer += 1;
    }
    let mlp =
        |prefix: &str, widths: Vec<usize>, tags: &[Value], first_tag: usize, mut x: Vec<f64>| {
            for (l, width) in widths.into_iter().enumerate() {
                let w = t(&format!("{prefix}.fc{l}.weight"));
                let b = t(&format!("{prefix}.fc{l}.bias"));
                let inputs = x.len();
                x = (0..width)
                    .map(|o| {
                        act(
                            &tags[first_tag + l],
                            b[o] + (0..inputs).map(|i| w[o * inputs + i] * x[i]).sum::<f64>(),
                        )
                    })
                    .collect();
            }
            x
        };
    let branch = mlp("branch", list("branch_fc"), btags, layer, x);
    let bias = if cfg["output_bias"].as_bool().unwrap() {
        t("bias")[0]
    } else {
        0.0
    };
    queries
        .chunks(get("trunk_input"))
        .map(|q| {
            let trunk = mlp("trunk", list("trunk_fc"), ttags, 0, q.to_vec());
            bias + branch.iter().zip(&trunk).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn sup(a: impl IntoIterator<Item = f64>) -> f64 {
    a.into_iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}
