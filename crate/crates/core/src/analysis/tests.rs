use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

/// Direct formula via z-scores with population standard deviations.
fn oracle_r(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let stats = |s: &[f64]| {
        let m = s.iter().sum::<f64>() / n;
        let sd = (s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        (m, sd)
    };
    let ((mx, sx), (my, sy)) = (stats(x), stats(y));
    x.iter()
        .zip(y)
        .map(|(a, b)| ((a - mx) / sx) * ((b - my) / sy))
        .sum::<f64>()
        / n
}

/// Two-sided t tail for integer degrees of freedom from the finite
/// trigonometric series for the t CDF.
fn oracle_p(r: f64, n: usize) -> f64 {
    let nu = n - 2;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r.abs() * ((nu as f64) / (1.0 - r * r)).sqrt();
    let theta = (t / (nu as f64).sqrt()).atan();
    let (s, c) = (theta.sin(), theta.cos());
    let inside = if nu % 2 == 1 {
        let mut sum = 0.0;
        if nu > 1 {
            let mut term = 1.0;
            sum = 1.0;
            let mut k = 2;
            while k + 1 < nu {
                term *= (k as f64) / ((k + 1) as f64) * c * c;
                sum += term;
                k += 2;
            }
        }
        2.0 / std::f64::consts::PI * (theta + s * c * sum)
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1;
        while k + 1 < nu {
            term *= (k as f64) / ((k + 1) as f64) * c * c;
            sum += term;
            k += 2;
        }
        s * sum
    };
    1.0 - inside
}

#[test]
fn pearson_matches_oracle_on_random_series() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0;
    while checked < 1000 {
        let n = rng.random_range(3..=52);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-100.0..100.0)).collect();
        let c = pearson(&x, &y).unwrap();
        assert!((c.r - oracle_r(&x, &y)).abs() < 1e-10, "n={n}");
        assert!((c.p_value - oracle_p(c.r, n)).abs() < 1e-6, "n={n} r={}", c.r);
        assert!((0.0..=1.0).contains(&c.p_value));
        checked += 1;
    }
}

#[test]
fn oracle_p_reproduces_the_worked_example() {
    assert!((oracle_p(0.8, 4) - 0.2).abs() < 1e-12);
    // One degree of freedom is the Cauchy distribution.
    let r: f64 = 0.5;
    let t = r / (1.0 - r * r).sqrt();
    assert!((oracle_p(r, 3) - (1.0 - 2.0 / std::f64::consts::PI * t.atan())).abs() < 1e-12);
}

proptest! {
    #[test]
    fn affine_images_are_perfectly_correlated(
        x in prop::collection::vec(-1000.0f64..1000.0, 3..40),
        a in 0.01f64..50.0,
        b in -100.0f64..100.0,
    ) {
        let spread = x.iter().cloned().fold(f64::MIN, f64::max) - x.iter().cloned().fold(f64::MAX, f64::min);
        prop_assume!(spread > 1e-3);
        let up: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let down: Vec<f64> = x.iter().map(|v| -a * v + b).collect();
        prop_assert!((pearson(&x, &up).unwrap().r - 1.0).abs() < 1e-9);
        prop_assert!((pearson(&x, &down).unwrap().r + 1.0).abs() < 1e-9);
    }
}

fn lang(code: &str) -> LanguageCode {
    LanguageCode::new(code).unwrap()
}

fn objective(kind: QueryKind) -> Objective {
    Objective {
        task: Some(TaskId::Zsre),
        kind,
    }
}

fn scores_from(profiles: &ProfileRegistry, f: impl Fn(&LanguageProfile, QueryKind) -> f64) -> LanguageScores {
    QueryKind::ALL
        .into_iter()
        .map(|k| {
            (
                objective(k),
                profiles.iter().map(|p| (p.lid.clone(), f(p, k))).collect(),
            )
        })
        .collect()
}

#[test]
fn constructed_collinearity_is_significant() {
    let profiles = bundled_profiles();
    let scores = scores_from(&profiles, |p, _| 2.0 * p.similarity(Feature::Syn) + 1.0);
    let cells = correlation_matrix(&scores, &profiles);
    assert_eq!(cells.len(), 20);
    for c in cells.iter().filter(|c| c.feature == Feature::Syn) {
        assert!((c.r.unwrap() - 1.0).abs() < 1e-12);
        assert!(c.significant);
        assert_eq!(c.n, 52);
    }
    for c in &cells {
        assert_eq!(c.significant, c.p_value.is_some_and(|p| p < 0.05));
    }
}

#[test]
fn constant_scores_leave_cells_unavailable() {
    let profiles = bundled_profiles();
    let scores = scores_from(&profiles, |_, _| 42.0);
    for c in correlation_matrix(&scores, &profiles) {
        assert_eq!(c.r, None);
        assert!(!c.significant);
        assert!(c.unavailable.as_deref().unwrap().contains("zero variance"));
    }
}

#[test]
fn grid_over_52_languages_matches_brute_force() {
    let profiles = bundled_profiles();
    let scores = scores_from(&profiles, |p, k| {
        let h = crate::text::fnv1a64(&format!("{}{k}", p.lid));
        (h % 10_000) as f64 / 100.0
    });
    let cells = correlation_matrix(&scores, &profiles);
    assert_eq!(cells.len(), 5 * 4);
    for c in &cells {
        let langs = &scores[&c.objective];
        let x: Vec<f64> = langs
            .keys()
            .map(|l| profiles.get(l).unwrap().similarity(c.feature))
            .collect();
        let y: Vec<f64> = langs.values().copied().collect();
        assert!((c.r.unwrap() - oracle_r(&x, &y)).abs() < 1e-10);
        assert!((c.p_value.unwrap() - oracle_p(c.r.unwrap(), 52)).abs() < 1e-6);
    }
}

#[test]
fn pairwise_deletion_and_too_few_languages() {
    let profiles = parse_profiles(
        "lid,language,family,syn_sim,pho_sim,inv_sim,gen_sim,geo_sim\n\
         de,German,G,80,70,60,50,40\nfr,French,R,60,70,60,30,30\nja,Japanese,J,30,20,50,0,10\n"
            .as_bytes(),
    )
    .unwrap();
    let mut scores = LanguageScores::new();
    scores.insert(
        objective(QueryKind::Reliability),
        [("de", 50.0), ("fr", 40.0), ("ja", 10.0), ("ko", 99.0)]
            .into_iter()
            .map(|(l, v)| (lang(l), v))
            .collect(),
    );
    scores.insert(
        objective(QueryKind::Locality),
        [("de", 50.0), ("ko", 40.0)]
            .into_iter()
            .map(|(l, v)| (lang(l), v))
            .collect(),
    );
    let cells = correlation_matrix(&scores, &profiles);
    let rel: Vec<_> = cells
        .iter()
        .filter(|c| c.objective.kind == QueryKind::Reliability)
        .collect();
    // ko has no profile and is dropped.
    assert!(rel.iter().all(|c| c.n == 3));
    let syn = rel.iter().find(|c| c.feature == Feature::Syn).unwrap();
    let expected = pearson(&[80.0, 60.0, 30.0], &[50.0, 40.0, 10.0]).unwrap();
    assert_eq!(syn.r, Some(expected.r));
    let loc: Vec<_> = cells
        .iter()
        .filter(|c| c.objective.kind == QueryKind::Locality)
        .collect();
    assert!(loc.iter().all(|c| c.r.is_none() && c.n == 1));
}

#[test]
fn matrix_ignores_language_order() {
    let profiles = bundled_profiles();
    let scores = scores_from(&profiles, |p, k| {
        p.similarity(Feature::Geo) * (k as usize + 1) as f64 % 37.0
    });
    // BTreeMap keys fix the order, so rebuild from a reversed insertion.
    let mut reversed = LanguageScores::new();
    for (o, langs) in &scores {
        let mut m = BTreeMap::new();
        for (l, v) in langs.iter().rev() {
            m.insert(l.clone(), *v);
        }
        reversed.insert(*o, m);
    }
    assert_eq!(
        correlation_matrix(&scores, &profiles),
        correlation_matrix(&reversed, &profiles)
    );
}

fn row(language: &str, kind: QueryKind, metric: Metric, value: f64) -> AggregateRow {
    AggregateRow {
        language: language.into(),
        kind,
        metric,
        value,
        count: 10,
    }
}

#[test]
fn per_language_rows_and_means() {
    let aggs: Vec<AggregateRow> = [40.0, 60.0, 50.0, 50.0]
        .into_iter()
        .zip(QueryKind::ALL)
        .flat_map(|(v, k)| {
            [
                row("de", k, Metric::F1, v),
                row("de", k, Metric::EM, 0.0),
                row("ALL", k, Metric::F1, v),
            ]
        })
        .collect();
    let rows = per_language_report(TaskId::Zsre, &aggs).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].mean, 50.0);
    let csv = language_rows_csv(&rows);
    assert_eq!(
        csv,
        "language,reliability,generality,locality,portability,mean\nde,40,60,50,50,50\n"
    );
    assert!(format_language_table(&rows).contains("50.00"));
    assert!(matches!(
        per_language_report(TaskId::Zsre, &[]),
        Err(AnalysisError::Empty)
    ));
}

#[test]
fn counterfact_uses_s_for_probability_kinds() {
    let aggs = vec![
        row("de", QueryKind::Reliability, Metric::S, 80.0),
        row("de", QueryKind::Reliability, Metric::M, 5.0),
        row("de", QueryKind::Portability, Metric::F1, 20.0),
    ];
    let rows = per_language_report(TaskId::Counterfact, &aggs).unwrap();
    assert_eq!(rows[0].scores[&QueryKind::Reliability], 80.0);
    assert_eq!(rows[0].mean, 50.0);
}

#[test]
fn pooled_scores_average_tasks() {
    let run = |task, value| RunResults {
        dir: PathBuf::from("x"),
        task,
        method: Method::MikeRandom,
        aggregates: vec![
            row("de", QueryKind::Portability, Metric::F1, value),
            row("de", QueryKind::Portability, Metric::EM, 0.0),
        ],
    };
    let (a, b) = (run(TaskId::Zsre, 10.0), run(TaskId::Wfd, 30.0));
    let per_task = language_scores(&[&a, &b], false);
    assert_eq!(per_task.len(), 2);
    let pooled = language_scores(&[&a, &b], true);
    let obj = Objective {
        task: None,
        kind: QueryKind::Portability,
    };
    assert_eq!(pooled[&obj][&lang("de")], 20.0);
    assert_eq!(obj.to_string(), "portability");
    assert_eq!(objective(QueryKind::Locality).to_string(), "zsre:locality");
}

#[test]
fn comparison_rows_follow_method_objective_metric() {
    let run = |method, value| RunResults {
        dir: PathBuf::from("x"),
        task: TaskId::Zsre,
        method,
        aggregates: vec![
            row("de", QueryKind::Reliability, Metric::F1, value),
            row("ALL", QueryKind::Reliability, Metric::EM, value / 2.0),
            row("ALL", QueryKind::Reliability, Metric::F1, value),
        ],
    };
    let rows = comparison_table(&[run(Method::MikeRandom, 50.0), run(Method::PromptBaseline, 40.0)]);
    let csv = comparison_csv(&rows);
    assert_eq!(
        csv,
        "method,task,objective,metric,value,languages\n\
         prompt,zsre,reliability,F1,40,10\nprompt,zsre,reliability,EM,20,10\n\
         mike_random,zsre,reliability,F1,50,10\nmike_random,zsre,reliability,EM,25,10\n"
    );
}

#[test]
fn heatmap_columns() {
    let profiles = bundled_profiles();
    let scores = scores_from(&profiles, |p, _| p.similarity(Feature::Syn));
    let csv = heatmap_csv(&correlation_matrix(&scores, &profiles));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("feature,objective,r,p,significant"));
    assert!(lines.next().unwrap().starts_with("syn,zsre:reliability,1,0,true"));
    assert_eq!(csv.lines().count(), 21);
}
