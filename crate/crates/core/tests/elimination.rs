use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use roadfield::assembly::assemble_with_traces;
use roadfield::eigsolve::{shift_floor, Resolvent};
use roadfield::{assemble, CoefficientField, Component, ProblemParams, Shape, Side, TruncatedGrid};

fn heterogeneous() -> ProblemParams {
    let mut p = ProblemParams::with_growth(CoefficientField::parse("0.8 * exp(-(x^2 + y^2) / 4) - 0.2", 1.0).unwrap());
    p.road.diffusion = 1.7;
    p.road.drift = 0.3;
    p.road.to_field = [0.6, 1.4];
    p.road.to_road = [1.2, 0.4];
    p.fields[1].diffusion = 0.5;
    p.fields[1].drift = -0.2;
    p
}

/// Schur complement of the trace block reproduces the eliminated matrix.
#[test]
fn trace_system_condenses_to_eliminated_matrix() {
    for (r, h, shape) in [(1.0, 0.5, Shape::Rectangle), (3.0, 0.5, Shape::Halfdisk), (2.0, 0.25, Shape::Rectangle)] {
        let grid = TruncatedGrid::new(r, h, shape).unwrap();
        let params = heterogeneous();
        let full = assemble_with_traces(&grid, &params, &Default::default()).unwrap();
        let a = assemble(&grid, &params, &Default::default()).unwrap().matrix.to_dense();
        let m = full.matrix.to_dense();

        let nr = grid.road_len();
        let ne = grid.extended_field_len();
        // map every extended index to an eliminated index, or None on traces
        let mut target = vec![None; nr + 2 * ne];
        for (k, t) in target.iter_mut().take(nr).enumerate() {
            *t = Some(k);
        }
        for (s_idx, side) in Side::BOTH.into_iter().enumerate() {
            for e in 0..ne {
                let (i, j) = grid.extended_lattice(e);
                if j > 0 {
                    let local = grid.field_local_at(i, j).unwrap();
                    target[nr + s_idx * ne + e] = Some(grid.global_index(Component::Field(side), local));
                }
            }
        }
        let traces: Vec<usize> = (0..target.len()).filter(|&k| target[k].is_none()).collect();
        assert!(traces.iter().all(|&t| full.mass[t] == 0.0));
        for &t in &traces {
            for &u in &traces {
                if t != u {
                    assert_eq!(m[t][u], 0.0, "trace block must be diagonal");
                }
            }
        }
        let n = a.len();
        let mut schur = vec![vec![0.0; n]; n];
        for p in 0..target.len() {
            let Some(ip) = target[p] else { continue };
            for q in 0..target.len() {
                let Some(iq) = target[q] else { continue };
                let mut v = m[p][q];
                for &t in &traces {
                    v -= m[p][t] * m[t][q] / m[t][t];
                }
                schur[ip][iq] = v;
            }
        }
        for i in 0..n {
            for j in 0..n {
                assert!(
                    (schur[i][j] - a[i][j]).abs() < 1e-12 * (1.0 + a[i][j].abs()),
                    "R={r} h={h}: entry ({i},{j}) {} vs {}",
                    schur[i][j],
                    a[i][j]
                );
            }
        }
    }
}

#[test]
fn resolvent_columns_are_positive() {
    let grid = TruncatedGrid::new(5.0, 0.5, Shape::Halfdisk).unwrap();
    let sys = assemble(&grid, &heterogeneous(), &Default::default()).unwrap();
    let n = sys.dim();
    let m = sys.matrix.shifted(shift_floor(&sys.matrix), &vec![1.0; n]);
    let res = Resolvent::factor(&m, Default::default(), &Default::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let k = rng.random_range(0..n);
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        let col = res.solve(&e).unwrap();
        assert!(col.iter().all(|v| *v > 0.0), "column {k}");
    }
}
