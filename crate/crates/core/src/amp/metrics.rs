/// Mean squared error per entry.
pub fn mse(a: &[f64], s: &[f64]) -> f64 {
    assert_eq!(a.len(), s.len());
    a.iter().zip(s).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Position of the largest entry in every section of size `b`; ties go to
/// the lowest index.
pub fn argmax_sections(x: &[f64], b: usize) -> Vec<usize> {
    x.chunks(b)
        .map(|sec| {
            let mut best = 0;
            for (j, &v) in sec.iter().enumerate() {
                if v > sec[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Section error rate: fraction of sections whose hard decision differs
/// from the true position.
pub fn ser(a: &[f64], s: &[f64], b: usize) -> f64 {
    let got = argmax_sections(a, b);
    let want = argmax_sections(s, b);
    let wrong = got.iter().zip(&want).filter(|(x, y)| x != y).count();
    wrong as f64 / got.len().max(1) as f64
}
