//! COBYLA trace checked against values recorded from an independent
//! implementation of the same algorithm (Powell's reference code) on a smooth
//! six-dimensional test function.

use qqvqe::optim::{minimize, Method, ObjectiveFn, OptimizerConfig};

const REFERENCE: [f64; 100] = [
    4.94063415973917,
    5.204194087226405,
    5.20885244796693,
    4.9479605814986085,
    5.0269588030914285,
    4.877039437300335,
    4.810148824781556,
    4.379884997194846,
    3.9555231481210082,
    3.548571268757338,
    3.169255000784026,
    2.835698867420794,
    2.543137695970486,
    2.4194867839506964,
    2.273073015588975,
    2.2091362963721117,
    2.2678451082364575,
    1.9920911184415422,
    1.874177658724844,
    1.6724127980152956,
    1.5053081197066682,
    1.3826735050687555,
    1.463619124321901,
    1.3510737887702042,
    1.109644366081055,
    1.031490535317232,
    0.8713021207598014,
    0.7226731925825653,
    0.5816766394717849,
    0.38123067968790286,
    0.2035280942473126,
    0.04730880437715612,
    -0.004750976613649649,
    0.0590356398652675,
    0.00042875706409561953,
    -0.06658378608330373,
    -0.07763044325960311,
    -0.09277977961268546,
    -0.04412792810850652,
    -0.07246132618320933,
    -0.0472479772907638,
    -0.07200765699734157,
    -0.08123036256025812,
    -0.10214278650612951,
    -0.09900192252959189,
    -0.10586788904587663,
    -0.09140421045703767,
    -0.10402615265596282,
    -0.10621124720099717,
    -0.10470403747368384,
    -0.10370907493714893,
    -0.10539608075249912,
    -0.10623818968274718,
    -0.10557137517448745,
    -0.10674124035174604,
    -0.10692694105059003,
    -0.10751912128778152,
    -0.10746524739784336,
    -0.10735304513694371,
    -0.1069229049576848,
    -0.10733767838611635,
    -0.10746191550797107,
    -0.10780551125663501,
    -0.1077506508248594,
    -0.10791264633057046,
    -0.10781476189465122,
    -0.10791306216627883,
    -0.10789928081747696,
    -0.10791283015487674,
    -0.10786449380771451,
    -0.10793545917996789,
    -0.10790550281994615,
    -0.10793460887590262,
    -0.10794993149030235,
    -0.10791953702118573,
    -0.10794147059073217,
    -0.10795085723346681,
    -0.10794959940198329,
    -0.10795145731726452,
    -0.10794462507965269,
    -0.10793814656017131,
    -0.10795760494688167,
    -0.10795154888970826,
    -0.1079581063234778,
    -0.10795979211914425,
    -0.10795058511904099,
    -0.10795883921858496,
    -0.10795789702352077,
    -0.10795369596075083,
    -0.10795901092923404,
    -0.10796105389261984,
    -0.10796220136789669,
    -0.10796147434596992,
    -0.10796086777092595,
    -0.10796315206565316,
    -0.1079629446373026,
    -0.10796345564678717,
    -0.10796479143217186,
    -0.10796525814034569,
    -0.10796459082102217,
];

fn smooth(x: &[f64]) -> f64 {
    x.iter()
        .enumerate()
        .map(|(i, v)| (v + 0.37 * i as f64 + 0.11).sin() + 0.05 * (i as f64 + 1.3) * v * v)
        .sum::<f64>()
        + 0.2 * x[0] * x[3]
}

#[test]
fn first_hundred_evaluations_match_reference() {
    let cfg = OptimizerConfig {
        method: Method::Cobyla,
        ftol: 1e-5,
        max_evals: 400,
        initial_step: 0.3,
        seed: 0,
    };
    let r = minimize(&mut ObjectiveFn::new(smooth), &[0.4, -0.2, 0.9, 0.1, 0.3, -0.6], &cfg).unwrap();
    assert!(r.converged);
    for (k, (got, want)) in r.trace.iter().zip(REFERENCE).enumerate() {
        assert!((got.value - want).abs() < 1e-9, "evaluation {k}: {} vs {want}", got.value);
    }
    assert!((r.best_value - (-0.10796545896041632)).abs() < 1e-8);
}
