// scratch: p_pair(2,1) spectrum for blaschke-factor splits
use curvemodels::curve::make_curve;
use curvemodels::field::fit_field;
use curvemodels::linalg::{c, cr, CMat, C64};
use curvemodels::model::build_model;
use curvemodels::schur::{NCharFn, WeightedSchurFunction};
use curvemodels::weight::Weight;

fn blaschke(curve: &curvemodels::curve::Curve, zeros: &[C64], order: usize) -> WeightedSchurFunction {
    let samples: Vec<CMat> = curve
        .z
        .iter()
        .map(|&z| {
            let mut v = c(1.0, 0.0);
            for &a in zeros {
                v *= if a.norm() < 1e-14 { z } else { (z - a) / (cr(1.0) - a.conj() * z) };
            }
            CMat::from_element(1, 1, v)
        })
        .collect();
    let (f, _) = fit_field(curve, &samples, order).unwrap();
    WeightedSchurFunction::new(f, Weight::identity(1), Weight::identity(1), curve.clone()).unwrap()
}

fn main() {
    let curve = make_curve(cr(0.0), 160).unwrap();
    let b = blaschke(&curve, &[c(0.5, 0.0)], 26);
    let z1 = blaschke(&curve, &[cr(0.0)], 4);
    for (name, fam) in [
        ("(z, b)", NCharFn::from_factors(vec![z1.clone(), b.clone()]).unwrap()),
        ("(b, z)", NCharFn::from_factors(vec![b.clone(), z1.clone()]).unwrap()),
    ] {
        let md = build_model(&fam).unwrap();
        let p = md.p_pair(2, 1);
        let sv = p.mat.clone().svd(false, false).singular_values;
        let mut v: Vec<f64> = sv.iter().cloned().collect();
        v.sort_by(|a, b| b.partial_cmp(a).unwrap());
        println!("{name}: top svs {:?}", &v[..6.min(v.len())]);
        let idem = curvemodels::linalg::opnorm(&(&p.mat * &p.mat - &p.mat));
        println!("  idempotency defect {idem:.3e}, count sv>0.5: {}", v.iter().filter(|&&s| s > 0.5).count());
    }
}
