//! Seeded synthetic movie databases with matching template sets.
//!
//! Value pools are disjoint across columns so every value chunk in a
//! question belongs to exactly one attribute (plus the foreign-key copies
//! of movie and actor names).

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::schema::{table, ColumnKind, Database, Schema};
use crate::seeded_rng;

const ADJECTIVES: [&str; 10] = [
    "Silent", "Golden", "Broken", "Hidden", "Crimson", "Frozen", "Endless", "Distant", "Burning", "Quiet",
];
const NOUNS: [&str; 10] = [
    "Harbor", "River", "Mirror", "Garden", "Signal", "Horizon", "Lantern", "Orchard", "Voyage", "Tower",
];
const ACTOR_FIRST: [&str; 8] = ["Anna", "Marco", "Priya", "Tomas", "Lena", "Omar", "Yuki", "Carlos"];
const ACTOR_LAST: [&str; 8] = ["Reyes", "Novak", "Okafor", "Lindqvist", "Moreau", "Tanaka", "Haddad", "Brennan"];
const GENRES: [&str; 8] = [
    "drama", "comedy", "thriller", "horror", "romance", "western", "animation", "documentary",
];
const AREAS: [&str; 12] = [
    "China", "France", "Japan", "India", "Brazil", "Canada", "Mexico", "Italy", "Spain", "Korea", "Egypt", "Kenya",
];
const BIRTHPLACES: [&str; 12] = [
    "Boston", "Lagos", "Lyon", "Osaka", "Madrid", "Chicago", "Mumbai", "Seoul", "Berlin", "Toronto", "Cairo", "Lima",
];
const FIRST_YEAR: u32 = 1981;
const YEARS: u32 = 40;

/// Single table, conditions on year or production area.
pub const EASY_TEMPLATES: &str = "\
movie.name :: which movies were released in {movie.year}
movie.name :: show me films from {movie.year}
movie.name :: list the movies that came out in year {movie.year}
movie.name :: what films premiered during {movie.year}
movie.name :: which movies were produced in {movie.area}
movie.name :: recommend some films made in {movie.area}
movie.name :: list the movies shot in {movie.area}
movie.name :: what films come from {movie.area}
";

/// Three tables; one- and two-condition questions, four of ten with two.
pub const HARD_TEMPLATES: &str = "\
movie.name :: which movies were released in {movie.year}
movie.name :: list {movie.genre} films
movie.name :: which movies feature {actor.name}
movie.name :: films starring actors born in {actor.birthplace}
actor.name :: who acted in {movie.name}
actor.name :: which actors were born in {actor.birthplace}
movie.name and :: {movie.genre} films released in {movie.year}
movie.name and :: movies featuring {actor.name} from {movie.year}
actor.name and :: actors in {movie.genre} movies from {movie.year}
movie.name or :: movies released in {movie.year} or {movie.year}
";

/// A database together with the template text that queries it.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub db: Database,
    pub templates: &'static str,
}

fn pairs(first: &[&str], last: &[&str]) -> Vec<String> {
    first
        .iter()
        .flat_map(|f| last.iter().map(move |l| format!("{f} {l}")))
        .collect()
}

/// `n` picks from `pool`, each pool entry used before any repeats.
fn spread<R: Rng + ?Sized>(pool: &[String], n: usize, rng: &mut R) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut round = pool.to_vec();
        round.shuffle(rng);
        out.extend(round.into_iter().take(n - out.len()));
    }
    out
}

fn owned(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn years() -> Vec<String> {
    (FIRST_YEAR..FIRST_YEAR + YEARS).map(|y| y.to_string()).collect()
}

fn movie_names<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<String> {
    let mut names = pairs(&ADJECTIVES, &NOUNS);
    names.shuffle(rng);
    names.truncate(n);
    names
}

pub fn easy_schema() -> Schema {
    use ColumnKind::*;
    Schema::new(vec![table(
        "movie",
        &[("name", Text), ("year", Number), ("area", Text), ("genre", Text)],
        Some("name"),
        &[],
    )])
    .expect("static schema")
}

pub fn easy(seed: u64) -> Corpus {
    let mut rng = seeded_rng(seed);
    let n = 80;
    let names = movie_names(n, &mut rng);
    let years = spread(&years(), n, &mut rng);
    let areas = spread(&owned(&AREAS), n, &mut rng);
    let genres = spread(&owned(&GENRES), n, &mut rng);
    let rows = (0..n)
        .map(|i| vec![names[i].clone(), years[i].clone(), areas[i].clone(), genres[i].clone()])
        .collect();
    Corpus {
        db: Database::new(easy_schema(), vec![rows]).expect("generated rows fit the schema"),
        templates: EASY_TEMPLATES,
    }
}

pub fn hard_schema() -> Schema {
    use ColumnKind::*;
    Schema::new(vec![
        table("movie", &[("name", Text), ("genre", Text), ("year", Number)], Some("name"), &[]),
        table(
            "movie_actor",
            &[("movie_name", Text), ("actor_name", Text)],
            None,
            &[("movie_name", "movie", "name"), ("actor_name", "actor", "name")],
        ),
        table("actor", &[("name", Text), ("birthplace", Text)], Some("name"), &[]),
    ])
    .expect("static schema")
}

pub fn hard(seed: u64) -> Corpus {
    let mut rng = seeded_rng(seed);
    let n_movies = 80;
    let n_actors = 40;
    let names = movie_names(n_movies, &mut rng);
    let genres = spread(&owned(&GENRES), n_movies, &mut rng);
    let years = spread(&years(), n_movies, &mut rng);
    let movies: Vec<Vec<String>> = (0..n_movies)
        .map(|i| vec![names[i].clone(), genres[i].clone(), years[i].clone()])
        .collect();

    let mut actor_names = pairs(&ACTOR_FIRST, &ACTOR_LAST);
    actor_names.shuffle(&mut rng);
    actor_names.truncate(n_actors);
    let places = spread(&owned(&BIRTHPLACES), n_actors, &mut rng);
    let actors: Vec<Vec<String>> = (0..n_actors)
        .map(|i| vec![actor_names[i].clone(), places[i].clone()])
        .collect();

    // every actor appears at least once; each movie gets 2-3 actors
    let mut cast_order = spread(&actor_names, n_movies * 3, &mut rng).into_iter();
    let mut links = Vec::new();
    for name in &names {
        let k = rng.random_range(2..=3);
        let mut cast: Vec<String> = Vec::new();
        while cast.len() < k {
            let a = cast_order.next().unwrap_or_else(|| actor_names[rng.random_range(0..n_actors)].clone());
            if !cast.contains(&a) {
                cast.push(a);
            }
        }
        for a in cast {
            links.push(vec![name.clone(), a]);
        }
    }
    Corpus {
        db: Database::new(hard_schema(), vec![movies, links, actors]).expect("generated rows fit the schema"),
        templates: HARD_TEMPLATES,
    }
}
