fn rand_rat(rng: &mut ChaCha8Rng) -> Rat {
    let p = loop {
        let p = rng.gen_range(-5i64..=5);
        if p != 0 {
            break p;
        }
    };
    rat(p, rng.gen_range(1i64..=4))
}


/// A random operator K = g dx + b_gamma v^gamma_x within the first-order
/// hypotheses: g a series in the undifferentiated variables and linear in
/// v^1, b free of v^1, b_1 constant.
fn rand_first_order_k(
    rng: &mut ChaCha8Rng,
    n: usize,
    trunc: TruncationPolicy,
) -> MatrixDiffOperator {
    let mut k = MatrixDiffOperator::zero(n, trunc);
    for a in 0..n {
        for b in 0..n {
            let mut g = DiffPoly::constant(rand_rat(rng), trunc);
            for gamma in 1..=n as u32 {
                if rng.gen_bool(0.7) {
                    g = g
                        .add(&DiffPoly::var(gamma, 0, trunc).scale(&rand_rat(rng)))
                        .unwrap();
                }
            }
            if n > 1 && rng.gen_bool(0.5) {
                g = g
                    .add(&DiffPoly::var(2, 0, trunc).pow(2).scale(&rand_rat(rng)))
                    .unwrap();
            }
            let mut order0 = DiffPoly::var(1, 1, trunc).scale(&rand_rat(rng));
            for gamma in 2..=n as u32 {
                if rng.gen_bool(0.6) {
                    let mut coeff = DiffPoly::constant(rand_rat(rng), trunc);
                    if rng.gen_bool(0.5) {
                        coeff = coeff.mul(&DiffPoly::var(2, 0, trunc)).unwrap();
                    }
                    order0 = order0
                        .add(&coeff.mul(&DiffPoly::var(gamma, 1, trunc)).unwrap())
                        .unwrap();
                }
            }
            let mut op = DiffOperator::zero(trunc);
            op.add_coeff(1, g);
            op.add_coeff(0, order0);
            k.set_entry(a, b, op);
        }
    }
    k
}

/// A numerator monomial of the requested differential degree, free of v^1_0
/// and of v^1_1 (the latter lives in the Laurent index).
fn rand_numerator(
    rng: &mut ChaCha8Rng,
    n: usize,
    degree: u32,
    trunc: TruncationPolicy,
) -> DiffPoly {
    let mut m = Monomial::one();
    let mut left = degree;
    while left > 0 {
        let (alpha, d) = if n > 1 && left == 1 {
            (2u32, 1u32)
        } else if n > 1 && rng.gen_bool(0.4) {
            (2, rng.gen_range(1..=left.min(3)))
        } else {
            // jets of v^1 must have order >= 2, so never leave a remainder of 1
            let d = if left <= 4 {
                left
            } else {
                let d = rng.gen_range(2..=4u32);
                if left - d == 1 {
                    d + 1
                } else {
                    d
                }
            };
            (1, d)
        };
        m = m.mul(&Monomial::var(VarIndex::new(alpha, d)));
        left -= d;
    }
    if n > 1 && rng.gen_bool(0.3) {
        m = m.mul(&Monomial::var(VarIndex::new(2, 0)));
    }
    DiffPoly::from_monomial(m, rand_rat(rng), trunc)
}

fn rand_purely_singular(
    rng: &mut ChaCha8Rng,
    n: usize,
    trunc: TruncationPolicy,
    small: bool,
) -> PurelySingularMiura {
    let images: Vec<LaurentDiffPoly> = (1..=n as u32)
        .map(|a| {
            let mut img = LaurentDiffPoly::var(a, 0, trunc);
            let corrections = if small { 1 } else { rng.gen_range(1..=2usize) };
            for _ in 0..corrections {
                let k = if small {
                    rng.gen_range(1..=trunc.eps_cap().min(2))
                } else {
                    rng.gen_range(1..=trunc.eps_cap().min(3))
                };
                let j = if small { 1 } else { rng.gen_range(1..=2u32) };
                // a degree-(k + j) numerator needs parts of size >= 2 when
                // only v^1 jets are available
                let degree = k + j;
                if n == 1 && degree < 2 {
                    continue;
                }
                let numerator = rand_numerator(rng, n, degree, trunc).mul_eps(k);
                img = img.add(&LaurentDiffPoly::from_component(-(j as i64), &numerator));
            }
            img
        })
        .collect();
    PurelySingularMiura::from_images(images).expect("generated within the subgroup conditions")
}

