#ifndef VQMC_H
#define VQMC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VqmcStatus {
  VQMC_STATUS_OK = 0,
  VQMC_STATUS_NULL_POINTER = 1,
  VQMC_STATUS_INVALID_UTF8 = 2,
  VQMC_STATUS_PARSE = 3,
  VQMC_STATUS_INVALID_ARGUMENT = 4,
  VQMC_STATUS_IO = 5,
  VQMC_STATUS_NUMERICAL = 6,
  VQMC_STATUS_PANIC = 7,
} VqmcStatus;

typedef enum VqmcFeatureKind {
  VQMC_FEATURE_KIND_LINEAR = 0,
  VQMC_FEATURE_KIND_SLATER = 1,
} VqmcFeatureKind;

// Opaque molecule handle.
typedef struct VqmcMolecule VqmcMolecule;

// Opaque wavefunction-parameter handle.
typedef struct VqmcParams VqmcParams;

typedef struct VqmcHyperparams {
  size_t n_layers;
  size_t width_one;
  size_t width_two;
  size_t n_det;
  enum VqmcFeatureKind feature_kind;
} VqmcHyperparams;

typedef struct VqmcExtrapolation {
  double i_left;
  double i_right;
  double i_exact;
  // 1 when `i2 < i1`.
  int32_t monotonic;
} VqmcExtrapolation;

typedef struct VqmcErrorStatistics {
  double delta_max_abs;
  double mean_abs;
  double std;
} VqmcErrorStatistics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failure on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *vqmc_last_error(void);

// Library version as a static NUL-terminated string.
const char *vqmc_version(void);

// Parses a molecule from TOML text with a `[molecule]` table.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a valid pointer.
enum VqmcStatus vqmc_molecule_from_toml(const char *toml, struct VqmcMolecule **out_mol);

// # Safety
// `mol` must come from [`vqmc_molecule_from_toml`] and not be used afterwards.
void vqmc_molecule_free(struct VqmcMolecule *mol);

// # Safety
// Pointers must be valid.
enum VqmcStatus vqmc_molecule_n_electrons(const struct VqmcMolecule *mol, size_t *n);

// Nuclear repulsion energy in hartree.
//
// # Safety
// Pointers must be valid.
enum VqmcStatus vqmc_molecule_nuclear_repulsion(const struct VqmcMolecule *mol, double *energy);

// Default network hyperparameters.
struct VqmcHyperparams vqmc_hyperparams_default(void);

// Randomly initialised parameters for `mol`.
//
// # Safety
// Pointers must be valid.
enum VqmcStatus vqmc_params_init(const struct VqmcMolecule *mol,
                                 const struct VqmcHyperparams *hp,
                                 uint64_t seed,
                                 struct VqmcParams **out_params);

// Reads a checkpoint file.
//
// # Safety
// `path` must be a NUL-terminated string and `out_params` valid.
enum VqmcStatus vqmc_params_load(const char *path, struct VqmcParams **out_params);

// Writes a checkpoint file.
//
// # Safety
// Pointers must be valid; `path` NUL-terminated.
enum VqmcStatus vqmc_params_save(const struct VqmcParams *params, const char *path);

// Number of scalar parameters.
//
// # Safety
// Pointers must be valid.
enum VqmcStatus vqmc_params_len(const struct VqmcParams *params, size_t *n);

// # Safety
// `params` must come from this library and not be used afterwards.
void vqmc_params_free(struct VqmcParams *params);

// Sign and `log|Ψ|` at one configuration of `3 * n_electrons` coordinates
// (bohr, `x0 y0 z0 x1 ...`, spin-up electrons first).
//
// # Safety
// `coords` must point to `n_coords` doubles; other pointers valid.
enum VqmcStatus vqmc_log_psi(const struct VqmcMolecule *mol,
                             const struct VqmcParams *params,
                             const double *coords,
                             size_t n_coords,
                             double *sign,
                             double *log_abs);

// Local energies of `n_walkers` configurations stored walker-major. Walkers
// at a node or a coalescence get NaN; the call still succeeds.
//
// # Safety
// `coords` must hold `n_walkers * 3 * n_electrons` doubles and `energies`
// room for `n_walkers`.
enum VqmcStatus vqmc_local_energy(const struct VqmcMolecule *mol,
                                  const struct VqmcParams *params,
                                  const double *coords,
                                  size_t n_walkers,
                                  double *energies);

// Two-point extrapolation of Monte Carlo estimates `i1`, `i2` obtained from
// `n1 < n2` samples.
//
// # Safety
// `result` must be valid.
enum VqmcStatus vqmc_extrapolate(double n1,
                                 double i1,
                                 double n2,
                                 double i2,
                                 struct VqmcExtrapolation *result);

// Error statistics (kJ/mol) of a reaction table given as TOML text.
//
// # Safety
// `toml` must be NUL-terminated and `result` valid.
enum VqmcStatus vqmc_reaction_statistics(const char *toml, struct VqmcErrorStatistics *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VQMC_H */
