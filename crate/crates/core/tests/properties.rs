//! Property tests for the numeric invariants that hold on arbitrary inputs.

use proptest::prelude::*;
use voxelprior::data::VoxelGrid;
use voxelprior::eval::iou;
use voxelprior::ops::{self, Padding};
use voxelprior::prior::average_prior;
use voxelprior::Tensor;

fn binary_grid(dim: usize) -> impl Strategy<Value = VoxelGrid> {
    proptest::collection::vec(prop_oneof![Just(0.0), Just(1.0)], dim * dim * dim)
        .prop_map(move |v| VoxelGrid::new(dim, v).unwrap())
}

fn unit_values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.0f64..=1.0, n)
}

proptest! {
    #[test]
    fn iou_is_bounded_symmetric_for_binary_grids(a in binary_grid(4), b in binary_grid(4)) {
        let ab = iou(&a, &b, 0.5).unwrap();
        let ba = iou(&b, &a, 0.5).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, ba);
        prop_assert_eq!(iou(&a, &a, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn average_prior_stays_in_unit_range_with_exact_mean(
        a in unit_values(64),
        b in unit_values(64),
        c in unit_values(64),
    ) {
        let grids = vec![
            VoxelGrid::new(4, a).unwrap(),
            VoxelGrid::new(4, b).unwrap(),
            VoxelGrid::new(4, c).unwrap(),
        ];
        let avg = average_prior(&grids).unwrap();
        prop_assert!(avg.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let mean = |g: &VoxelGrid| g.values().iter().sum::<f64>() / 64.0;
        let expect = grids.iter().map(mean).sum::<f64>() / 3.0;
        prop_assert!((mean(&avg) - expect).abs() < 1e-12);
    }

    #[test]
    fn upsample_backward_is_the_adjoint(
        x in proptest::collection::vec(-1.0f64..1.0, 8),
        g in proptest::collection::vec(-1.0f64..1.0, 64),
    ) {
        // <g, up(x)> == <up^T(g), x> defines the correct backward exactly
        let x = Tensor::new(vec![1, 2, 2, 2], x).unwrap();
        let g = Tensor::new(vec![1, 4, 4, 4], g).unwrap();
        let up = ops::upsample3d(&x).unwrap();
        let gx = ops::upsample3d_backward(x.shape(), &g).unwrap();
        let lhs: f64 = g.data().iter().zip(up.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = gx.data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn conv2d_is_linear_in_the_input(
        a in proptest::collection::vec(-1.0f64..1.0, 16),
        b in proptest::collection::vec(-1.0f64..1.0, 16),
        w in proptest::collection::vec(-1.0f64..1.0, 9),
    ) {
        let a = Tensor::new(vec![1, 4, 4], a).unwrap();
        let b = Tensor::new(vec![1, 4, 4], b).unwrap();
        let w = Tensor::new(vec![1, 1, 3, 3], w).unwrap();
        let bias = Tensor::zeros(&[1]);
        let sum = a.add(&b).unwrap();
        let ca = ops::conv2d(&a, &w, &bias, Padding::Same).unwrap();
        let cb = ops::conv2d(&b, &w, &bias, Padding::Same).unwrap();
        let cs = ops::conv2d(&sum, &w, &bias, Padding::Same).unwrap();
        for ((&x, &y), &z) in ca.data().iter().zip(cb.data()).zip(cs.data()) {
            prop_assert!((x + y - z).abs() < 1e-9);
        }
    }
}
