//! P-values of every battery test stay uniform over many extracted blocks.

use hetqrng::config::PipelineConfig;
use hetqrng::extractor::{BitBlock, BitOrigin};
use hetqrng::pipeline::Pipeline;
use hetqrng::randomness::{ks_uniform, run_battery, TestName, TestParams, DEFAULT_ALPHA};

const BLOCK_BITS: usize = 1_000_000;
const BLOCKS: usize = 200;

/// Vacuum-pipeline output of one simulation seed, at least `n` bits.
fn extracted(seed: u64, n: usize) -> BitBlock {
    let mut cfg = PipelineConfig::default();
    cfg.simulation_seed = seed;
    // about 1.73 extracted bits per raw sample, plus filter margins
    cfg.raw_samples = (n as f64 / 1.73 * 1.15) as u64;
    let p = Pipeline::new(cfg).unwrap();
    let (_, raw) = p.simulate(Vec::new()).unwrap();
    let (_, filtered) = p.filter(&raw[..], None, Vec::new()).unwrap();
    drop(raw);
    let cert = p.certify(&filtered[..]).unwrap();
    let (s, bytes) = p.extract(&filtered[..], &cert, Vec::new()).unwrap();
    assert!(s.output_bits as usize >= n, "{} bits", s.output_bits);
    BitBlock::from_bytes(&bytes, s.output_bits as usize, BitOrigin::Extracted).unwrap()
}

#[test]
fn extracted_pvalues_are_uniform() {
    let mut p: Vec<Vec<f64>> = vec![Vec::with_capacity(BLOCKS); TestName::ALL.len()];
    // two simulation seeds keep the raw capture in memory small
    for seed in [1, 2] {
        let bits = extracted(seed, BLOCKS / 2 * BLOCK_BITS);
        for b in 0..BLOCKS / 2 {
            let block = bits.slice(b * BLOCK_BITS, BLOCK_BITS).unwrap();
            let rep = run_battery(&block, DEFAULT_ALPHA, &TestParams::default()).unwrap();
            for (dst, r) in p.iter_mut().zip(&rep.results) {
                dst.push(r.p_value);
            }
        }
    }
    for (name, values) in TestName::ALL.iter().zip(&p) {
        assert_eq!(values.len(), BLOCKS);
        let ks = ks_uniform(values).unwrap();
        assert!(ks.p_value >= 1e-4, "{name:?}: D = {:.4}, p = {:.2e}", ks.statistic, ks.p_value);
    }
}
