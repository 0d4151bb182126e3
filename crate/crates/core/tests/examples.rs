//! Runs the quick examples so they keep compiling and keep their asserts.
//! The training examples (`overfit`, `qat_vs_ptq`, `cli_pipeline`) are
//! covered by the acceptance and CLI tests instead.

macro_rules! example {
    ($name:ident, $file:literal) => {
        #[allow(dead_code)]
        #[path = $file]
        mod $name;

        #[test]
        fn $name() {
            $name::run().unwrap();
        }
    };
}

example!(gradcheck, "../examples/gradcheck.rs");
example!(residual_identity, "../examples/residual_identity.rs");
example!(channel_scaling, "../examples/channel_scaling.rs");
example!(metrics, "../examples/metrics.rs");
example!(fake_quant, "../examples/fake_quant.rs");
example!(int8_inference, "../examples/int8_inference.rs");
example!(checkpoints, "../examples/checkpoints.rs");
example!(synthetic_data, "../examples/synthetic_data.rs");
example!(lr_schedule, "../examples/lr_schedule.rs");
