use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population: usize,
    pub tournament: usize,
    pub crossover: f64,
    /// Per-bit flip probability; `None` means one over the genome length.
    pub mutation: Option<f64>,
    /// Best individuals copied unchanged into the next generation.
    pub elites: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 50,
            tournament: 2,
            crossover: 0.9,
            mutation: None,
            elites: 1,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 || self.tournament == 0 || self.elites > self.population {
            return Err(Error::Config(
                "GA needs population >= 2, tournament >= 1 and elites <= population".into(),
            ));
        }
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        if !unit(self.crossover) || !self.mutation.map_or(true, unit) {
            return Err(Error::Config("GA rates must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Generational GA over flat bit genomes.
#[derive(Clone, Debug)]
pub struct Ga {
    config: GaConfig,
    genes: usize,
    population: Vec<Vec<u8>>,
}

impl Ga {
    pub fn new(config: GaConfig, genes: usize, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let population = (0..config.population)
            .map(|_| (0..genes).map(|_| rng.gen::<bool>() as u8).collect())
            .collect();
        Ok(Ga {
            config,
            genes,
            population,
        })
    }

    pub fn with_population(config: GaConfig, population: Vec<Vec<u8>>) -> Result<Self> {
        config.validate()?;
        let genes = population.first().map_or(0, Vec::len);
        if population.len() != config.population || population.iter().any(|g| g.len() != genes) {
            return Err(Error::Config("population does not match the GA configuration".into()));
        }
        Ok(Ga {
            config,
            genes,
            population,
        })
    }

    pub fn population(&self) -> &[Vec<u8>] {
        &self.population
    }

    fn mutation(&self) -> f64 {
        self.config.mutation.unwrap_or(1.0 / self.genes.max(1) as f64)
    }

    fn tournament(&self, fitness: &[f64], rng: &mut Rng) -> usize {
        let n = self.population.len();
        let mut best = rng.gen_range(0..n);
        for _ in 1..self.config.tournament {
            let c = rng.gen_range(0..n);
            if fitness[c] > fitness[best] {
                best = c;
            }
        }
        best
    }

    /// Replaces the population with the next generation given the current
    /// one's fitness values.
    pub fn step(&mut self, fitness: &[f64], rng: &mut Rng) -> Result<()> {
        if fitness.len() != self.population.len() {
            return Err(Error::LengthMismatch {
                left: fitness.len(),
                right: self.population.len(),
            });
        }
        let mut order: Vec<usize> = (0..fitness.len()).collect();
        order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]));
        let mut next: Vec<Vec<u8>> = order[..self.config.elites]
            .iter()
            .map(|&i| self.population[i].clone())
            .collect();
        let pm = self.mutation();
        while next.len() < self.population.len() {
            let a = &self.population[self.tournament(fitness, rng)];
            let b = &self.population[self.tournament(fitness, rng)];
            let mut child = if rng.gen::<f64>() < self.config.crossover {
                a.iter()
                    .zip(b)
                    .map(|(&x, &y)| if rng.gen::<bool>() { x } else { y })
                    .collect()
            } else {
                a.clone()
            };
            if pm > 0.0 {
                for g in &mut child {
                    if rng.gen::<f64>() < pm {
                        *g ^= 1;
                    }
                }
            }
            next.push(child);
        }
        self.population = next;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    fn ones(g: &[u8]) -> f64 {
        g.iter().map(|&b| b as f64).sum()
    }

    #[test]
    fn finds_all_ones() {
        let mut hits = 0;
        for seed in 0..100 {
            let mut rng = rng_from_seed(seed);
            let mut ga = Ga::new(GaConfig::default(), 16, &mut rng).unwrap();
            let mut best = 0.0f64;
            for _ in 0..50 {
                let fit: Vec<f64> = ga.population().iter().map(|g| ones(g)).collect();
                best = best.max(fit.iter().copied().fold(0.0, f64::max));
                ga.step(&fit, &mut rng).unwrap();
            }
            let fit: Vec<f64> = ga.population().iter().map(|g| ones(g)).collect();
            best = best.max(fit.iter().copied().fold(0.0, f64::max));
            if best == 16.0 {
                hits += 1;
            }
        }
        assert!(hits >= 95, "{hits}/100");
    }

    #[test]
    fn identical_population_without_mutation_is_fixed() {
        let cfg = GaConfig {
            mutation: Some(0.0),
            population: 6,
            ..GaConfig::default()
        };
        let pop = vec![vec![1, 0, 1, 1, 0]; 6];
        let mut ga = Ga::with_population(cfg, pop.clone()).unwrap();
        let mut rng = rng_from_seed(1);
        for _ in 0..20 {
            ga.step(&[1.0; 6], &mut rng).unwrap();
            assert_eq!(ga.population(), &pop[..]);
        }
    }

    #[test]
    fn genome_length_is_preserved() {
        let mut rng = rng_from_seed(2);
        let mut ga = Ga::new(GaConfig::default(), 37, &mut rng).unwrap();
        for _ in 0..10 {
            let fit: Vec<f64> = ga.population().iter().map(|g| ones(g)).collect();
            ga.step(&fit, &mut rng).unwrap();
            assert!(ga.population().iter().all(|g| g.len() == 37));
            assert_eq!(ga.population().len(), 50);
        }
        assert!(ga.step(&[1.0], &mut rng).is_err());
    }

    #[test]
    fn config_checks() {
        assert!(GaConfig {
            population: 1,
            ..GaConfig::default()
        }
        .validate()
        .is_err());
        assert!(GaConfig {
            crossover: 1.5,
            ..GaConfig::default()
        }
        .validate()
        .is_err());
    }
}
