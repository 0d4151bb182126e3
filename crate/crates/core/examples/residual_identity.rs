//! With the residual head zeroed, the network returns its input exactly:
//! the output is `clip(x + 0)`.
//!
//!     cargo run --example residual_identity

use gated_isp::{init_network, ModelConfig, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run() -> gated_isp::Result<()> {
    let mut net = init_network::<f32>(&ModelConfig::with_width(4), 7)?;
    net.zero_head();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..3 {
        let s = Shape::new(1, 3, 16, 24);
        let x = Tensor::from_vec(s, (0..s.numel()).map(|_| rng.random::<f32>()).collect())?;
        let y = net.forward(&x)?;
        let identical = x.data().iter().zip(y.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        println!("input {i}: bit-identical output = {identical}");
        assert!(identical);
    }
    // inputs whose side is not a multiple of 8 are padded and cropped back
    let s = Shape::new(1, 3, 13, 21);
    let x = Tensor::from_vec(s, (0..s.numel()).map(|_| rng.random::<f32>()).collect())?;
    let y = net.enhance(&x)?;
    println!("13×21 input -> {:?}, equal = {}", y.shape(), y == x);
    Ok(())
}

#[allow(dead_code)]
fn main() -> gated_isp::Result<()> {
    run()
}
