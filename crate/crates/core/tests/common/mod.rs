#![allow(dead_code)]

use fullstab::model::parse_model;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const EX64: &str = include_str!("../../examples/ex64.model");
pub const SKEW: &str = include_str!("../../examples/skew.model");
pub const IDENTITY: &str = include_str!("../../examples/identity.model");

pub fn model_path(name: &str) -> String {
    format!("{}/examples/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn num(v: f64) -> String {
    if v < 0.0 {
        format!("({v})")
    } else {
        format!("{v}")
    }
}

/// `a . x + c` as model text.
pub fn affine(row: &[f64], c: f64) -> String {
    let mut s: Vec<String> = row.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(j, a)| format!("{}*x{}", num(*a), j + 1)).collect();
    s.push(num(c));
    s.join(" + ")
}

fn half(v: f64) -> String {
    let k = (2.0 * v).round() as i64;
    assert!((k as f64 / 2.0 - v).abs() < 1e-12, "{v} is not a multiple of 1/2");
    format!("{k}/2")
}

/// Affine map `f = A x`, constraint block and a reference point where
/// `v = f(x̄) + Σ λ_i ∇φ_i`. Entries of `x̄` must be multiples of 1/2.
pub fn affine_model(a: &[Vec<f64>], d: usize, constraints: &[&str], x: &[f64], lambda: &[f64]) -> String {
    let n = a.len();
    let f: Vec<String> = a.iter().map(|r| affine(r, 0.0)).collect();
    let mut text = format!("dims n={n} d={d}\nf = ({})\n", f.join(", "));
    for c in constraints {
        text.push_str(&format!("constraint {c} <= 0\n"));
    }
    let bare = parse_model(&text).expect("corpus model parses");
    let p = vec![0.0; d];
    let fx = bare.eval_f(x, &p).unwrap();
    let grads = bare.eval_grad_phi(x, &p).unwrap();
    let v: Vec<f64> = (0..n).map(|j| fx[j] + grads.iter().zip(lambda).map(|(g, l)| l * g[j]).sum::<f64>()).collect();
    let join = |xs: &[f64]| xs.iter().map(|&t| half(t)).collect::<Vec<_>>().join(",");
    let pref = if d > 0 { format!(" p=({})", join(&p)) } else { String::new() };
    text.push_str(&format!("reference x=({}){pref} v=({})\n", join(x), join(&v)));
    text
}

/// Twenty boxes, simplices and apex-pyramids with assorted maps and
/// reference multipliers.
pub fn corpus() -> Vec<(String, String)> {
    let pd2 = vec![vec![2.0, 1.0], vec![-1.0, 1.0]];
    let diag2 = vec![vec![1.0, 0.0], vec![0.0, 3.0]];
    let saddle2 = vec![vec![1.0, 0.0], vec![0.0, -1.0]];
    let pd3 = vec![vec![2.0, 1.0, 0.0], vec![-1.0, 2.0, 1.0], vec![0.0, -1.0, 1.0]];
    let saddle3 = vec![vec![1.0, 0.0, 0.0], vec![0.0, -1.0, 0.0], vec![0.0, 0.0, 1.0]];
    let rot3 = vec![vec![1.0, 2.0, 0.0], vec![-2.0, 1.0, 0.0], vec![0.0, 0.0, 2.0]];
    let box2 = ["x1 - 1 - p1", "-x1 - 1", "x2 - 1", "-x2 - 1"];
    let simplex3 = ["-x1", "-x2", "-x3", "x1 + x2 + x3 - 1 - p1"];
    let pyramid = ["x1 - x3 - p1", "-x1 - x3 + p1", "x2 - x3 - p2", "-x2 - x3 + p2"];
    let mut out = Vec::new();
    let mut add = |name: &str, text: String| out.push((name.to_string(), text));
    // boxes
    add("box-pd-interior", affine_model(&pd2, 1, &box2, &[0.0, 0.0], &[0.0; 4]));
    add("box-pd-vertex", affine_model(&pd2, 1, &box2, &[1.0, 1.0], &[1.0, 0.0, 2.0, 0.0]));
    add("box-pd-degenerate-vertex", affine_model(&pd2, 1, &box2, &[1.0, 1.0], &[0.0, 0.0, 1.0, 0.0]));
    add("box-diag-edge", affine_model(&diag2, 1, &box2, &[1.0, 0.5], &[2.0, 0.0, 0.0, 0.0]));
    add("box-saddle-vertex", affine_model(&saddle2, 1, &box2, &[1.0, 1.0], &[1.0, 0.0, 1.0, 0.0]));
    add("box-saddle-edge", affine_model(&saddle2, 1, &box2, &[1.0, 0.0], &[1.0, 0.0, 0.0, 0.0]));
    add("box-saddle-interior", affine_model(&saddle2, 1, &box2, &[0.0, 0.0], &[0.0; 4]));
    // simplices
    add("simplex-pd-origin", affine_model(&pd3, 1, &simplex3, &[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0, 0.0]));
    add("simplex-pd-vertex", affine_model(&pd3, 1, &simplex3, &[1.0, 0.0, 0.0], &[0.0, 1.0, 1.0, 1.0]));
    add("simplex-pd-edge", affine_model(&pd3, 1, &simplex3, &[0.5, 0.5, 0.0], &[0.0, 0.0, 2.0, 1.0]));
    add("simplex-pd-degenerate", affine_model(&pd3, 1, &simplex3, &[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0]));
    add("simplex-rot-facet", affine_model(&rot3, 1, &simplex3, &[0.5, 0.0, 0.5], &[0.0, 1.0, 0.0, 1.0]));
    add("simplex-saddle-origin", affine_model(&saddle3, 1, &simplex3, &[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0, 0.0]));
    add("simplex-saddle-facet", affine_model(&saddle3, 1, &simplex3, &[0.0, 0.5, 0.5], &[1.0, 0.0, 0.0, 1.0]));
    // pyramids
    add("pyramid-example", EX64.to_string());
    add("pyramid-pd-interior-multiplier", affine_model(&pd3, 2, &pyramid, &[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0, 1.0]));
    add("pyramid-pd-edge-multiplier", affine_model(&pd3, 2, &pyramid, &[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 1.0]));
    add("pyramid-rot", affine_model(&rot3, 2, &pyramid, &[0.0, 0.0, 0.0], &[2.0, 1.0, 1.0, 2.0]));
    add("pyramid-saddle", affine_model(&saddle3, 2, &pyramid, &[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0, 1.0]));
    add("pyramid-saddle-degenerate", affine_model(&saddle3, 2, &pyramid, &[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0]));
    out
}

/// Random expression in `x1..xn`, `p1..pd` of the given depth.
pub fn random_expr(rng: &mut ChaCha8Rng, n: usize, d: usize, depth: usize) -> String {
    if depth == 0 || rng.gen_bool(0.25) {
        return match rng.gen_range(0..4) {
            0 if d > 0 => format!("p{}", rng.gen_range(1..=d)),
            1 => format!("{}", rng.gen_range(1..4)),
            _ => format!("x{}", rng.gen_range(1..=n)),
        };
    }
    let a = random_expr(rng, n, d, depth - 1);
    let b = random_expr(rng, n, d, depth - 1);
    match rng.gen_range(0..6) {
        0 => format!("({a} + {b})"),
        1 => format!("({a} - {b})"),
        2 | 3 => format!("({a})*({b})"),
        4 => format!("({a})/(1 + ({b})^2)"),
        _ => format!("({a})^{}", rng.gen_range(2..4)),
    }
}
