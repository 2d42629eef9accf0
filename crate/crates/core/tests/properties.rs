use candle_core::{Device, Tensor};
use proptest::prelude::*;

use deblur_gan::data::make_kernel;
use deblur_gan::image::{denormalize, normalize, ImageTensor, PixelImage};
use deblur_gan::losses::{gan_value_estimate, generator_adversarial_loss, scalar, wasserstein_critic_loss};
use deblur_gan::metrics::{psnr, ssim};
use deblur_gan::patches::{assemble_patches, extract_patches, plan_patches};

fn image(h: usize, w: usize, c: usize) -> impl Strategy<Value = PixelImage> {
    prop::collection::vec(any::<u8>(), h * w * c).prop_map(move |d| PixelImage::new(h, w, c, d).unwrap())
}

fn sized_image() -> impl Strategy<Value = PixelImage> {
    (1usize..24, 1usize..24).prop_flat_map(|(h, w)| image(h, w, 3))
}

fn scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, 1..12)
}

fn t(v: &[f64]) -> Tensor {
    Tensor::new(v, &Device::Cpu).unwrap()
}

proptest! {
    #[test]
    fn normalize_round_trips(img in sized_image()) {
        let back = denormalize(&normalize(&img)).unwrap();
        prop_assert_eq!(back, img);
    }

    #[test]
    fn patch_grid_covers_every_pixel(h in 1usize..300, w in 1usize..300, patch in 1usize..64, stride_frac in 1usize..=4) {
        prop_assume!(h >= patch && w >= patch);
        let stride = (patch * stride_frac / 4).max(1);
        let grid = plan_patches(h, w, patch, stride).unwrap();
        let mut hits = vec![0u32; h * w];
        for &(r, c) in &grid.positions {
            prop_assert!(r + patch <= h && c + patch <= w);
            for y in r..r + patch {
                for x in c..c + patch {
                    hits[y * w + x] += 1;
                }
            }
        }
        prop_assert!(hits.iter().all(|&n| n > 0));
    }

    #[test]
    fn extract_then_assemble_is_identity(img in (16usize..40, 16usize..40).prop_flat_map(|(h, w)| image(h, w, 3)), patch in 4usize..16, stride in 1usize..16) {
        prop_assume!(stride <= patch);
        let t = normalize(&img);
        let grid = plan_patches(img.height(), img.width(), patch, stride).unwrap();
        let back = assemble_patches(&extract_patches(&t, &grid).unwrap(), &grid).unwrap();
        prop_assert_eq!(back.shape(), t.shape());
        for (a, b) in back.values().iter().zip(t.values()) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn critic_loss_is_antisymmetric(a in scores(), b in scores()) {
        let ab = scalar(&wasserstein_critic_loss(&t(&a), &t(&b)).unwrap()).unwrap();
        let ba = scalar(&wasserstein_critic_loss(&t(&b), &t(&a)).unwrap()).unwrap();
        prop_assert!((ab + ba).abs() <= 4.0 * f64::EPSILON);
    }

    #[test]
    fn wasserstein_losses_ignore_batch_order(a in scores(), b in scores(), seed in any::<u64>()) {
        let mut ra = a.clone();
        let mut rb = b.clone();
        let k = (seed as usize) % ra.len();
        ra.rotate_left(k);
        rb.reverse();
        let x = scalar(&wasserstein_critic_loss(&t(&a), &t(&b)).unwrap()).unwrap();
        let y = scalar(&wasserstein_critic_loss(&t(&ra), &t(&rb)).unwrap()).unwrap();
        prop_assert!((x - y).abs() < 1e-12);
        let g1 = scalar(&generator_adversarial_loss(&t(&b)).unwrap()).unwrap();
        let g2 = scalar(&generator_adversarial_loss(&t(&rb)).unwrap()).unwrap();
        prop_assert!((g1 - g2).abs() < 1e-12);
    }

    #[test]
    fn game_value_is_never_positive(a in scores(), b in scores()) {
        let v = gan_value_estimate(&a, &b).unwrap();
        prop_assert!(v.is_finite() && v <= 0.0);
    }

    #[test]
    fn metrics_are_symmetric(pair in (11usize..24, 11usize..24).prop_flat_map(|(h, w)| (image(h, w, 3), image(h, w, 3)))) {
        let (a, b) = pair;
        prop_assert_eq!(psnr(&a, &b).unwrap(), psnr(&b, &a).unwrap());
        let (s1, s2) = (ssim(&a, &b).unwrap(), ssim(&b, &a).unwrap());
        prop_assert!((s1 - s2).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&s1));
    }

    #[test]
    fn kernels_have_unit_mass(length in 1usize..40, angle in -360.0f64..360.0) {
        let k = make_kernel(length, angle).unwrap();
        prop_assert!((k.taps.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(k.size % 2 == 1 && k.size >= length);
    }

    #[test]
    fn tensor_layout_round_trips(n in 1usize..3, h in 1usize..6, w in 1usize..6, seed in any::<u32>()) {
        let vals: Vec<f32> = (0..n * h * w * 3).map(|i| ((i as u32).wrapping_mul(seed) % 1000) as f32 / 500.0 - 1.0).collect();
        let x = ImageTensor::new(n, h, w, 3, vals).unwrap();
        let back = ImageTensor::from_tensor(&x.to_tensor(candle_core::DType::F32, &Device::Cpu).unwrap()).unwrap();
        prop_assert_eq!(back, x);
    }
}
