mod common;

use boxoffice_core::pretrain::{init_checkpoint, pretrain_loop, VG_PROJ_BIAS, VG_PROJ_WEIGHT};
use boxoffice_core::retrieval::{build_index, keyword_set, query, rank, recall_at_k};
use boxoffice_core::{ModelCheckpoint, PosterObjectSet, Split, TokenizedMovie};
use common::{desk, desk_config, Desk};
use ndarray::Array2;

fn trained(steps: u64) -> (Desk, ModelCheckpoint) {
    let mut cfg = desk_config(3);
    cfg.synth.n_movies = 200;
    cfg.pretrain.steps = steps;
    let d = desk(cfg);
    let init = init_checkpoint(&d.prepared.context, d.cfg.encoder.clone(), None, Some(d.cfg.synth.poster_object_dim)).unwrap();
    let out = pretrain_loop(init, &d.prepared.owned(Split::Train), &d.corpus.posters, &d.cfg.pretrain, None).unwrap();
    (d, out.checkpoint)
}

#[test]
fn index_holds_the_projected_objects() {
    let (d, ckpt) = trained(5);
    let posters = &d.corpus.posters[..3];
    let index = build_index(&ckpt, posters).unwrap();
    assert_eq!(index.len(), 3);
    assert!(build_index(&ckpt, &[]).unwrap().is_empty());

    let w = ckpt.params.value(ckpt.params.id(VG_PROJ_WEIGHT).unwrap());
    let b = ckpt.params.value(ckpt.params.id(VG_PROJ_BIAS).unwrap());
    for (p, set) in posters.iter().zip(&index.sets) {
        for r in 0..p.n_objects() {
            for c in 0..w.ncols() {
                let mut want = b[[0, c]] as f64;
                for k in 0..p.dim() {
                    want += p.objects[[r, k]] as f64 * w[[k, c]] as f64;
                }
                assert!((set[[r, c]] as f64 - want).abs() < 1e-6, "{} row {r} col {c}", p.movie_id);
            }
        }
    }
}

#[test]
fn empty_posters_are_skipped() {
    let (d, ckpt) = trained(1);
    let mut posters = d.corpus.posters[..2].to_vec();
    posters[1].objects = Array2::zeros((0, d.cfg.synth.poster_object_dim));
    let index = build_index(&ckpt, &posters).unwrap();
    assert_eq!(index.movie_ids, vec![posters[0].movie_id.clone()]);
}

#[test]
fn own_poster_is_found_after_grounding() {
    let (d, ckpt) = trained(150);
    let p = &d.prepared;
    let movie = p
        .split(Split::Test)
        .into_iter()
        .find(|m| !m.cluster_tokens(&p.context.layout).is_empty())
        .unwrap();
    let own: Vec<PosterObjectSet> = d.corpus.posters.iter().filter(|x| x.movie_id == movie.movie_id).cloned().collect();
    let index = build_index(&ckpt, &own).unwrap();
    let (_, token) = movie.cluster_tokens(&p.context.layout)[0];
    let hits = query(&index, &ckpt, movie, token, 5).unwrap();
    assert_eq!(hits.len(), 1);
    assert_eq!((hits[0].rank, hits[0].movie_id.as_str()), (1, movie.movie_id.as_str()));

    let queries: Vec<&TokenizedMovie> = p
        .split(Split::Test)
        .into_iter()
        .filter(|m| !m.cluster_tokens(&p.context.layout).is_empty())
        .collect();
    let ids: std::collections::HashSet<&str> = queries.iter().map(|m| m.movie_id.as_str()).collect();
    let candidates: Vec<PosterObjectSet> = d.corpus.posters.iter().filter(|x| ids.contains(x.movie_id.as_str())).cloned().collect();
    let index = build_index(&ckpt, &candidates).unwrap();
    let recall = recall_at_k(&index, &ckpt, &queries, 5).unwrap();
    let chance = 5.0 / queries.len() as f64;
    assert!(recall > chance, "recall@5 {recall} vs chance {chance}");
}

#[test]
fn keyword_sets_have_one_row_per_cluster_token() {
    let (d, ckpt) = trained(1);
    let p = &d.prepared;
    let movie = &p.movies[0];
    let set = keyword_set(&ckpt, movie).unwrap();
    assert_eq!(set.nrows(), movie.cluster_tokens(&p.context.layout).len());
    assert_eq!(set.ncols(), d.cfg.encoder.d_model);
    let index = build_index(&ckpt, &d.corpus.posters[..4]).unwrap();
    assert!(rank(&index, set.row(0).as_slice().unwrap(), 0).unwrap().is_empty());
}
