//! Seeded synthetic corpora with planted structure.
//!
//! Keywords come in clusters of near-synonyms whose lexical vectors are a
//! shared prototype plus noise. Clusters belong to themes, and a movie draws
//! most of its clusters from one theme. Each cluster also owns a prototype
//! object vector; a poster holds noisy copies of its movie's cluster
//! prototypes plus distractors. Revenue follows
//!
//! ```text
//! log10 revenue = intercept + budget_coef * log10 budget
//!               + Σ cluster effects + mean star quality + noise
//! ```

use chrono::{Duration, NaiveDate};
use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::clustering::LexicalVectors;
use crate::dataset::{CastMember, Gender, Genre, MovieRecord, Mpaa, PersonRef};
use crate::error::{Error, Result};
use crate::io::PosterObjectSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n_movies: usize,
    pub n_keywords: usize,
    pub n_clusters_true: usize,
    pub n_themes: usize,
    pub n_people: usize,
    pub n_companies: usize,
    pub lexical_dim: usize,
    pub poster_object_dim: usize,
    pub clusters_per_movie: (usize, usize),
    /// Chance that each of a movie's clusters comes from its theme.
    pub theme_purity: f64,
    pub franchise_rate: f64,
    /// Fraction of movies released without a known revenue.
    pub missing_revenue_rate: f64,
    pub distractor_objects: usize,
    pub lexical_noise: f32,
    pub poster_noise: f32,
    pub revenue_noise: f64,
    pub intercept: f64,
    pub budget_coef: f64,
    pub theme_effect_sd: f64,
    pub cluster_effect_sd: f64,
    pub star_quality_sd: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_movies: 512,
            n_keywords: 240,
            n_clusters_true: 48,
            n_themes: 8,
            n_people: 300,
            n_companies: 12,
            lexical_dim: 16,
            poster_object_dim: 32,
            clusters_per_movie: (2, 4),
            theme_purity: 0.8,
            franchise_rate: 0.25,
            missing_revenue_rate: 0.1,
            distractor_objects: 2,
            lexical_noise: 0.25,
            poster_noise: 0.3,
            revenue_noise: 0.1,
            intercept: 2.0,
            budget_coef: 0.8,
            theme_effect_sd: 0.4,
            cluster_effect_sd: 0.2,
            star_quality_sd: 0.3,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.clusters_per_movie;
        let checks = [
            (self.n_movies > 0, "n_movies must be positive"),
            (self.n_clusters_true > 0, "n_clusters_true must be positive"),
            (self.n_keywords >= self.n_clusters_true, "n_keywords must be at least n_clusters_true"),
            (self.n_themes > 0 && self.n_themes <= self.n_clusters_true, "n_themes must lie in 1..=n_clusters_true"),
            (self.n_people >= 7, "n_people must be at least 7"),
            (self.n_companies > 0, "n_companies must be positive"),
            (self.lexical_dim > 0 && self.poster_object_dim > 0, "vector widths must be positive"),
            (lo >= 1 && lo <= hi && hi <= self.n_clusters_true, "clusters_per_movie must satisfy 1 <= lo <= hi <= n_clusters_true"),
            ((0.0..=1.0).contains(&self.theme_purity), "theme_purity must lie in [0, 1]"),
            ((0.0..=1.0).contains(&self.franchise_rate), "franchise_rate must lie in [0, 1]"),
            ((0.0..=1.0).contains(&self.missing_revenue_rate), "missing_revenue_rate must lie in [0, 1]"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Invalid(msg.into()));
            }
        }
        let sds = [self.lexical_noise as f64, self.poster_noise as f64, self.revenue_noise, self.theme_effect_sd, self.cluster_effect_sd, self.star_quality_sd];
        if sds.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::Invalid("noise levels and effect sizes must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn keyword_name(keyword: usize, cluster: usize) -> String {
        format!("c{cluster:03}k{keyword:04}")
    }

    pub fn cluster_of_keyword(&self, keyword: usize) -> usize {
        keyword % self.n_clusters_true
    }

    pub fn theme_of_cluster(&self, cluster: usize) -> usize {
        cluster % self.n_themes
    }
}

/// Generated corpus together with the planted ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub records: Vec<MovieRecord>,
    pub posters: Vec<PosterObjectSet>,
    pub lexical: LexicalVectors,
    /// Keywords of each true cluster.
    pub true_clusters: Vec<Vec<String>>,
    /// True cluster ids of each movie, parallel to `records`.
    pub movie_clusters: Vec<Vec<usize>>,
    pub cluster_effects: Vec<f64>,
    pub object_prototypes: Array2<f32>,
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize, sd: f32) -> Vec<f32> {
    if sd == 0.0 {
        return vec![0.0; n];
    }
    let dist = Normal::new(0.0f32, sd).expect("valid sd");
    (0..n).map(|_| dist.sample(rng)).collect()
}

fn normal(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    if sd == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sd).expect("valid sd").sample(rng)
}

fn unit(mut v: Vec<f32>) -> Vec<f32> {
    let n = v.iter().map(|x| x * x).sum::<f32>().sqrt().max(1e-12);
    v.iter_mut().for_each(|x| *x /= n);
    v
}

fn zipf(n: usize) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|r| 1.0 / r as f64)).expect("positive weights")
}

struct Person {
    id: String,
    name: String,
    gender: Gender,
    birth: NaiveDate,
    quality: f64,
}

impl Person {
    fn as_ref(&self) -> PersonRef {
        PersonRef {
            id: self.id.clone(),
            name: self.name.clone(),
        }
    }
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let n_c = spec.n_clusters_true;
    let lexical_protos: Vec<Vec<f32>> = (0..n_c).map(|_| unit(normal_vec(&mut rng, spec.lexical_dim, 1.0))).collect();
    let object_protos: Vec<Vec<f32>> = (0..n_c).map(|_| unit(normal_vec(&mut rng, spec.poster_object_dim, 1.0))).collect();
    let theme_effects: Vec<f64> = (0..spec.n_themes).map(|_| normal(&mut rng, spec.theme_effect_sd)).collect();
    let cluster_effects: Vec<f64> = (0..n_c)
        .map(|c| theme_effects[spec.theme_of_cluster(c)] + normal(&mut rng, spec.cluster_effect_sd))
        .collect();

    let mut true_clusters = vec![Vec::new(); n_c];
    let mut lexical = LexicalVectors::new(spec.lexical_dim);
    for k in 0..spec.n_keywords {
        let c = spec.cluster_of_keyword(k);
        let name = SyntheticSpec::keyword_name(k, c);
        let noise = normal_vec(&mut rng, spec.lexical_dim, spec.lexical_noise / (spec.lexical_dim as f32).sqrt());
        let v = lexical_protos[c].iter().zip(noise).map(|(p, e)| p + e).collect();
        lexical.insert(name.clone(), v)?;
        true_clusters[c].push(name);
    }
    let by_theme: Vec<Vec<usize>> = (0..spec.n_themes)
        .map(|t| (0..n_c).filter(|&c| spec.theme_of_cluster(c) == t).collect())
        .collect();
    let theme_genres: Vec<[Genre; 2]> = (0..spec.n_themes)
        .map(|t| [Genre::ALL[(2 * t) % Genre::ALL.len()], Genre::ALL[(2 * t + 1) % Genre::ALL.len()]])
        .collect();

    let people: Vec<Person> = (0..spec.n_people)
        .map(|i| {
            let gender = [Gender::Male, Gender::Female, Gender::Unknown][rng.random_range(0..3)];
            let birth = NaiveDate::from_ymd_opt(1940, 1, 1).expect("valid date") + Duration::days(rng.random_range(0..365 * 50));
            Person {
                id: format!("p{i:05}"),
                name: format!("Person {i:05}"),
                gender,
                birth,
                quality: normal(&mut rng, spec.star_quality_sd),
            }
        })
        .collect();
    let people_dist = zipf(spec.n_people);
    let company_dist = zipf(spec.n_companies);
    let n_distributors = spec.n_companies.div_ceil(2);
    let distributor_dist = zipf(n_distributors);
    let n_collections = (spec.n_movies / 8).max(1);
    let epoch = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");

    let mut records = Vec::with_capacity(spec.n_movies);
    let mut posters = Vec::with_capacity(spec.n_movies);
    let mut movie_clusters = Vec::with_capacity(spec.n_movies);
    for i in 0..spec.n_movies {
        let movie_id = format!("m{i:05}");
        let theme = rng.random_range(0..spec.n_themes);
        let n_clusters = rng.random_range(spec.clusters_per_movie.0..=spec.clusters_per_movie.1);
        let mut clusters: Vec<usize> = Vec::with_capacity(n_clusters);
        while clusters.len() < n_clusters {
            let c = if rng.random_bool(spec.theme_purity) {
                let pool = &by_theme[theme];
                pool[rng.random_range(0..pool.len())]
            } else {
                rng.random_range(0..n_c)
            };
            if !clusters.contains(&c) {
                clusters.push(c);
            }
        }
        let mut keywords = Vec::new();
        for &c in &clusters {
            let members = &true_clusters[c];
            if members.is_empty() {
                continue;
            }
            let take = rng.random_range(1..=members.len().min(2));
            for j in sample(&mut rng, members.len(), take) {
                keywords.push(members[j].clone());
            }
        }

        let mut picked = Vec::new();
        while picked.len() < 7 {
            let p = people_dist.sample(&mut rng);
            if !picked.contains(&p) {
                picked.push(p);
            }
        }
        let n_actors = rng.random_range(1..=3);
        let directors = vec![people[picked[0]].as_ref()];
        let writers: Vec<PersonRef> = picked[1..1 + rng.random_range(0..=2)].iter().map(|&p| people[p].as_ref()).collect();
        let actors: Vec<CastMember> = picked[3..3 + n_actors]
            .iter()
            .enumerate()
            .map(|(order, &p)| CastMember {
                id: people[p].id.clone(),
                name: people[p].name.clone(),
                gender: people[p].gender,
                birth_date: Some(people[p].birth),
                order: Some(order as u32),
            })
            .collect();
        let star = std::iter::once(picked[0]).chain(picked[3..3 + n_actors].iter().copied());
        let star_quality = star.clone().map(|p| people[p].quality).sum::<f64>() / (1 + n_actors) as f64;

        let log_budget = rng.random_range(6.0..8.5);
        let budget = 10f64.powf(log_budget).round() as u64;
        let log_rev = spec.intercept
            + spec.budget_coef * log_budget
            + clusters.iter().map(|&c| cluster_effects[c]).sum::<f64>() / clusters.len() as f64
            + star_quality
            + normal(&mut rng, spec.revenue_noise);
        let revenue = if rng.random_bool(spec.missing_revenue_rate) {
            0
        } else {
            10f64.powf(log_rev).round().max(1.0) as u64
        };
        let franchise = rng.random_bool(spec.franchise_rate);
        let mut genres = vec![theme_genres[theme][0]];
        if rng.random_bool(0.5) {
            genres.push(theme_genres[theme][1]);
        }
        if rng.random_bool(0.2) {
            let g = Genre::ALL[rng.random_range(0..Genre::ALL.len())];
            if !genres.contains(&g) {
                genres.push(g);
            }
        }
        let release_date = epoch + Duration::days(rng.random_range(0..365 * 20));

        let mut rows: Vec<Vec<f32>> = Vec::new();
        for &c in &clusters {
            let noise = normal_vec(&mut rng, spec.poster_object_dim, spec.poster_noise / (spec.poster_object_dim as f32).sqrt());
            rows.push(object_protos[c].iter().zip(noise).map(|(p, e)| p + e).collect());
        }
        for _ in 0..spec.distractor_objects {
            rows.push(unit(normal_vec(&mut rng, spec.poster_object_dim, 1.0)));
        }
        let order = sample(&mut rng, rows.len(), rows.len());
        let flat: Vec<f32> = order.iter().flat_map(|j| rows[j].iter().copied()).collect();
        posters.push(PosterObjectSet {
            movie_id: movie_id.clone(),
            objects: Array2::from_shape_vec((rows.len(), spec.poster_object_dim), flat).expect("rows share width"),
        });

        records.push(MovieRecord {
            movie_id: movie_id.clone(),
            title: format!("Synthetic Movie {i}"),
            budget,
            revenue,
            release_date: Some(release_date),
            genres,
            keywords,
            mpaa: Mpaa::ALL[rng.random_range(0..Mpaa::ALL.len())],
            production_company: format!("Studio {}", company_dist.sample(&mut rng)),
            distributor: format!("Distributor {}", distributor_dist.sample(&mut rng)),
            franchise,
            collection_name: franchise.then(|| format!("Saga {}", rng.random_range(0..n_collections))),
            directors,
            writers,
            actors,
            poster_ref: Some(movie_id),
            copycat: false,
        });
        movie_clusters.push(clusters);
    }

    let object_prototypes = Array2::from_shape_vec((n_c, spec.poster_object_dim), object_protos.concat()).expect("rows share width");
    Ok(SyntheticCorpus {
        records,
        posters,
        lexical,
        true_clusters,
        movie_clusters,
        cluster_effects,
        object_prototypes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            n_movies: 40,
            n_keywords: 30,
            n_clusters_true: 6,
            n_themes: 2,
            n_people: 20,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.posters, b.posters);
        assert_eq!(a.lexical, b.lexical);
    }

    #[test]
    fn seed_changes_corpus() {
        let a = generate(&small()).unwrap();
        let b = generate(&SyntheticSpec { seed: 9, ..small() }).unwrap();
        assert_ne!(a.records, b.records);
    }

    #[test]
    fn posters_carry_one_object_per_cluster_plus_distractors() {
        let spec = small();
        let c = generate(&spec).unwrap();
        for (p, cl) in c.posters.iter().zip(&c.movie_clusters) {
            assert_eq!(p.n_objects(), cl.len() + spec.distractor_objects);
            assert_eq!(p.dim(), spec.poster_object_dim);
        }
    }

    #[test]
    fn keywords_belong_to_planted_clusters() {
        let spec = small();
        let c = generate(&spec).unwrap();
        for (rec, cl) in c.records.iter().zip(&c.movie_clusters) {
            for kw in &rec.keywords {
                let owner = c.true_clusters.iter().position(|m| m.contains(kw)).unwrap();
                assert!(cl.contains(&owner));
            }
        }
        assert_eq!(c.true_clusters.iter().map(Vec::len).sum::<usize>(), spec.n_keywords);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(generate(&SyntheticSpec { n_keywords: 3, ..small() }).is_err());
        assert!(generate(&SyntheticSpec { clusters_per_movie: (3, 2), ..small() }).is_err());
        assert!(generate(&SyntheticSpec { theme_purity: 1.5, ..small() }).is_err());
    }
}
