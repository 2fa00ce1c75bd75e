//! Running per-feature mean/variance for observation scaling.

pub const OBS_CLIP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RunningNorm {
    pub count: f64,
    pub mean: Vec<f64>,
    /// Population variance.
    pub var: Vec<f64>,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Merges a row-major `n x dim` batch (parallel-variance combination).
    pub fn update(&mut self, rows: &[f64]) {
        let d = self.dim();
        let n = rows.len() / d;
        if n == 0 {
            return;
        }
        let nf = n as f64;
        let mut bm = vec![0.0; d];
        for r in rows.chunks_exact(d) {
            for (m, x) in bm.iter_mut().zip(r) {
                *m += x;
            }
        }
        bm.iter_mut().for_each(|m| *m /= nf);
        let mut bv = vec![0.0; d];
        for r in rows.chunks_exact(d) {
            for j in 0..d {
                bv[j] += (r[j] - bm[j]).powi(2);
            }
        }
        bv.iter_mut().for_each(|v| *v /= nf);
        if self.count == 0.0 {
            self.mean = bm;
            self.var = bv;
            self.count = nf;
            return;
        }
        let total = self.count + nf;
        for j in 0..d {
            let delta = bm[j] - self.mean[j];
            let m2 = self.var[j] * self.count + bv[j] * nf + delta * delta * self.count * nf / total;
            self.mean[j] += delta * nf / total;
            self.var[j] = m2 / total;
        }
        self.count = total;
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.var)
            .map(|((x, m), v)| ((x - m) / (v.sqrt() + 1e-8)).clamp(-OBS_CLIP, OBS_CLIP))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn incremental_matches_batch() {
        let data: Vec<f64> = (0..60).map(|i| ((i * 13) % 7) as f64 - 0.5 * i as f64).collect();
        let mut a = RunningNorm::new(3);
        a.update(&data);
        let mut b = RunningNorm::new(3);
        b.update(&data[..21]);
        b.update(&data[21..]);
        for j in 0..3 {
            assert!((a.mean[j] - b.mean[j]).abs() < 1e-12);
            assert!((a.var[j] - b.var[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn fresh_normalizer_is_identity_up_to_clip() {
        let n = RunningNorm::new(2);
        let y = n.normalize(&[0.5, 30.0]);
        assert!((y[0] - 0.5).abs() < 1e-7);
        assert_eq!(y[1], OBS_CLIP);
    }
}
