//! Named scenario presets. Each returns a raw config that a user file or
//! `--set` override can refine field by field.

use crate::config::{
    RawConfig, RawDomain, RawEigen, RawInit, RawKernel, RawNumerics, RawParams, RawRun, RawStefan,
};

pub const NAMES: [&str; 8] =
    ["thm22", "thm23", "thm33", "thm42", "thm43", "cor41", "thm45", "lstar"];

/// One-line summaries for `nsir presets`.
pub const SUMMARIES: [(&str, &str); 8] = [
    ("thm22", "zero-flux run below threshold; epidemic dies out toward (n*, 0, 0)"),
    ("thm23", "zero-flux run above threshold; settles on the endemic equilibrium"),
    ("thm33", "absorbing-boundary run probing endemic steady-state existence"),
    ("thm42", "moving-front run, small expansion rate: epidemic vanishes"),
    ("thm43", "moving-front run with threshold ratio >= 1: epidemic spreads"),
    ("cor41", "moving-front run seeded wider than the critical span: spreads"),
    ("thm45", "moving-front run, narrow seed and tiny expansion rate: vanishes"),
    ("lstar", "threshold report: principal eigenvalue, ratio, critical span"),
];

fn kinetics(k: f64, mu: f64, h0: f64) -> RawParams {
    RawParams {
        a: Some(2.0),
        beta: Some(1.0),
        b: Some(1.0),
        gamma: Some(0.5),
        k: Some(k),
        d: Some(1.0),
        mu: Some(mu),
        h0: Some(h0),
    }
}

fn fixed_domain_run(name: &str, k: f64) -> RawConfig {
    RawConfig {
        run: Some(RawRun {
            model: Some("neumann".into()),
            name: Some(name.into()),
            ..Default::default()
        }),
        params: Some(kinetics(k, 1.0, 1.0)),
        kernel: Some(RawKernel {
            family: Some("top_hat".into()),
            width: Some(0.5),
            normalization: Some("sinkhorn_symmetric".into()),
        }),
        domain: Some(RawDomain { half: Some(2.0), n: Some(201) }),
        numerics: Some(RawNumerics { horizon: Some(200.0), ..Default::default() }),
        init: Some(RawInit {
            kind: Some("perturbed".into()),
            s: Some(0.8),
            i: Some(0.1),
            ..Default::default()
        }),
        ..Default::default()
    }
}

fn front_run(name: &str, mu: f64, h0: f64, l_dom: f64) -> RawConfig {
    RawConfig {
        run: Some(RawRun {
            model: Some("stefan".into()),
            name: Some(name.into()),
            ..Default::default()
        }),
        params: Some(kinetics(5.0, mu, h0)),
        kernel: Some(RawKernel {
            family: Some("truncated_gaussian".into()),
            width: Some(0.04),
            normalization: Some("none".into()),
        }),
        stefan: Some(RawStefan {
            s_spacing: Some(0.02),
            l_dom: Some(l_dom),
            s_level: Some(0.5),
            i_amp: Some(0.45),
            ..Default::default()
        }),
        numerics: Some(RawNumerics { horizon: Some(200.0), ..Default::default() }),
        ..Default::default()
    }
}

pub fn raw(name: &str) -> Option<RawConfig> {
    let cfg = match name {
        // Below the fixed-domain threshold: R01 = k(a - beta)/(b(a + gamma)) = 0.8.
        "thm22" => fixed_domain_run("thm22", 2.0),
        // Above it (R01 = 2): converges to the endemic state (0.5, 0.4, 0.1).
        "thm23" => fixed_domain_run("thm23", 5.0),
        "thm33" => RawConfig {
            run: Some(RawRun {
                model: Some("dirichlet".into()),
                name: Some("thm33".into()),
                existence: Some(true),
                ..Default::default()
            }),
            params: Some(kinetics(5.0, 1.0, 1.0)),
            kernel: Some(RawKernel {
                family: Some("top_hat".into()),
                width: Some(0.5),
                normalization: Some("sinkhorn_symmetric".into()),
            }),
            domain: Some(RawDomain { half: Some(2.0), n: Some(121) }),
            numerics: Some(RawNumerics {
                horizon: Some(150.0),
                steady_stop: Some(true),
                ..Default::default()
            }),
            init: Some(RawInit {
                kind: Some("sine".into()),
                s: Some(1.0),
                i: Some(0.5),
                power: Some(1),
            }),
            ..Default::default()
        },
        "thm42" => front_run("thm42", 0.1, 0.3, 10.0),
        "thm43" => front_run("thm43", 0.02, 1.3, 12.0),
        "cor41" => front_run("cor41", 0.05, 1.3, 12.0),
        "thm45" => front_run("thm45", 0.01, 0.3, 10.0),
        "lstar" => RawConfig {
            run: Some(RawRun {
                model: Some("thresholds".into()),
                name: Some("lstar".into()),
                ..Default::default()
            }),
            params: Some(kinetics(5.0, 0.01, 0.3)),
            kernel: Some(RawKernel {
                family: Some("truncated_gaussian".into()),
                width: Some(0.05),
                normalization: Some("none".into()),
            }),
            eigen: Some(RawEigen {
                d: Some(1.0),
                c1: Some(5.0),
                c2: Some(2.5),
                half: Some(1.0),
                n: Some(401),
                l_star: Some(true),
                length_tol: Some(1e-6),
            }),
            ..Default::default()
        },
        _ => return None,
    };
    Some(cfg)
}
