mod common;

use common::*;
use jointparse::model::{Dropout, ModelConfig, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny() -> ModelConfig {
    ModelConfig {
        vocab_size: 8,
        label_count: 4,
        d_model: 8,
        d_ff: 6,
        heads: 2,
        head_dim: None,
        layers: 2,
        label_hidden: 5,
        max_len: 8,
        dropout: Dropout::NONE,
        seed: 3,
    }
}

#[test]
fn gradient_check_without_dropout() {
    let c = tiny();
    let p = ModelParams::init(&c).unwrap();
    let r = grad_check(&p, &c, &[3, 4, 5, 6, 7, 3], 1);
    assert!(r.max_rel_err < 1e-4, "{}: {}", r.max_rel_err, r.worst);
    assert_eq!(r.checked, p.param_count());
}

#[test]
fn gradient_check_with_fixed_dropout_masks() {
    let mut c = tiny();
    c.dropout = Dropout { attention: 0.2, relu: 0.2, residual: 0.2, embedding: 0.2 };
    let p = ModelParams::init(&c).unwrap();
    let r = grad_check(&p, &c, &[3, 4, 5, 6], 2);
    assert!(r.max_rel_err < 1e-4, "{}: {}", r.max_rel_err, r.worst);
}

#[test]
fn gradient_check_with_separate_head_width() {
    let mut c = tiny();
    c.heads = 3;
    c.head_dim = Some(2);
    let p = ModelParams::init(&c).unwrap();
    let r = grad_check(&p, &c, &[1, 3, 2], 3);
    assert!(r.max_rel_err < 1e-4, "{}: {}", r.max_rel_err, r.worst);
}

#[test]
fn gradient_check_random_configs() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..4 {
        let c = random_tiny_config(&mut rng);
        let p = ModelParams::init(&c).unwrap();
        let n = rng.gen_range(1..=8);
        let words: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c.vocab_size)).collect();
        let r = grad_check(&p, &c, &words, rng.gen());
        assert!(r.max_rel_err < 1e-4, "{c:?}: {}: {}", r.max_rel_err, r.worst);
    }
}
