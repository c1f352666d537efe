//! Composite Gauss–Legendre quadrature on panelled intervals.

const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];

const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Quadrature nodes and weights for a sequence of breakpoints, each interval
/// subdivided into `per_interval` equal panels with 8 Gauss–Legendre nodes.
pub fn gauss_legendre_rule(breaks: &[f64], per_interval: usize) -> (Vec<f64>, Vec<f64>) {
    let per = per_interval.max(1);
    let mut nodes = Vec::with_capacity((breaks.len().saturating_sub(1)) * per * 8);
    let mut weights = Vec::with_capacity(nodes.capacity());
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let h = (b - a) / per as f64;
        for p in 0..per {
            let lo = a + p as f64 * h;
            let mid = lo + 0.5 * h;
            for (x, wt) in GL8_NODES.iter().zip(GL8_WEIGHTS.iter()) {
                nodes.push(mid + 0.5 * h * x);
                weights.push(0.5 * h * wt);
            }
        }
    }
    (nodes, weights)
}
