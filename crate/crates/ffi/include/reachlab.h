#ifndef REACHLAB_H
#define REACHLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>
#include <stdint.h>
#include <stddef.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum RlStatus {
  RlOk = 0,
  RlNullPointer = 1,
  RlInvalidArgument = 2,
  RlDegenerateInput = 3,
  RlIoError = 4,
  RlBadArtifact = 5,
} RlStatus;

/**
 * Failure taxonomy, mirroring the episode reports.
 */
typedef enum RlOutcomeClass {
  RlSuccess = 0,
  RlWrongRoom = 1,
  RlStuckAtWall = 2,
  RlSameRoomNotPrecise = 3,
  RlCrossedDoorNotPrecise = 4,
} RlOutcomeClass;

/**
 * World rectangle plus wall/doorway placement.
 */
typedef struct RlGeometry RlGeometry;

/**
 * A trained pairwise reachability head loaded from a checkpoint.
 */
typedef struct RlPairHead RlPairHead;

/**
 * Environment constants: action bound, success radius, wall standoff,
 * stuck-band half-width.
 */
typedef struct RlEnvParams {
  double a_max;
  double r_succ;
  double wall_standoff;
  double stuck_band;
} RlEnvParams;

/**
 * Message for the most recent error on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *rl_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *rl_version(void);

/**
 * Default environment constants.
 */
struct RlEnvParams rl_env_default(void);

/**
 * New geometry handle; NULL if the parameters are inconsistent.
 * Free with `rl_geometry_free`.
 */
struct RlGeometry *rl_geometry_new(double width,
                                   double height,
                                   double wall_x,
                                   double door_lo,
                                   double door_hi);

/**
 * The default 224x224 two-room geometry. Free with `rl_geometry_free`.
 */
struct RlGeometry *rl_geometry_default(void);

/**
 * # Safety
 * `geom` must be a pointer returned by one of the geometry constructors and
 * not yet freed.
 */
void rl_geometry_free(struct RlGeometry *geom);

/**
 * One environment step from (x, y) under action (dx, dy).
 *
 * # Safety
 * `geom`, `out_x`, `out_y` must be valid pointers.
 */
enum RlStatus rl_step(const struct RlGeometry *geom,
                      struct RlEnvParams env,
                      double x,
                      double y,
                      double dx,
                      double dy,
                      double *out_x,
                      double *out_y);

/**
 * Shortest obstacle-avoiding path length between two points.
 *
 * # Safety
 * `geom` and `out` must be valid pointers.
 */
enum RlStatus rl_geodesic(const struct RlGeometry *geom,
                          double ax,
                          double ay,
                          double bx,
                          double by,
                          double *out);

/**
 * Classify a finished episode from its goal, final state, and topology
 * class.
 *
 * # Safety
 * `geom`, `out_class`, `out_final_dist` must be valid pointers.
 */
enum RlStatus rl_classify_outcome(const struct RlGeometry *geom,
                                  struct RlEnvParams env,
                                  double goal_x,
                                  double goal_y,
                                  double final_x,
                                  double final_y,
                                  bool cross_wall,
                                  enum RlOutcomeClass *out_class,
                                  double *out_final_dist);

/**
 * Generate a start/goal manifest ("balanced40" | "matched40" | "hard100")
 * and return its JSON as a newly-allocated string (free with
 * `rl_string_free`), or NULL on failure.
 *
 * # Safety
 * `geom` must be valid; `kind` must be a NUL-terminated string.
 */
char *rl_generate_manifest_json(const struct RlGeometry *geom, const char *kind, uint64_t seed);

/**
 * # Safety
 * `s` must be a pointer previously returned by an allocation-returning
 * function of this library, not yet freed.
 */
void rl_string_free(char *s);

/**
 * Spearman rank correlation with average-tie ranks.
 *
 * # Safety
 * `a` and `b` must point to `len` readable doubles; `out` must be valid.
 */
enum RlStatus rl_spearman(const double *a, const double *b, uintptr_t len, double *out);

/**
 * Percentile rank (0 best, 100 worst) that costs `c` assign to the
 * candidate `c_star` judges best.
 *
 * # Safety
 * `c` and `c_star` must point to `len` readable doubles; `out` must be valid.
 */
enum RlStatus rl_best_rank_pct(const double *c, const double *c_star, uintptr_t len, double *out);

/**
 * The pairwise feature map [z_i, z_j, z_i - z_j, |z_i - z_j|].
 *
 * # Safety
 * `z_i`, `z_j` must point to `dim` readable doubles and `out` to `4 * dim`
 * writable doubles.
 */
enum RlStatus rl_pair_features(const double *z_i, const double *z_j, uintptr_t dim, double *out);

/**
 * Load a head checkpoint; NULL on failure (see `rl_last_error_message`).
 * Free with `rl_pair_head_free`.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
struct RlPairHead *rl_pair_head_load(const char *path);

/**
 * Latent dimension the head expects for each input.
 *
 * # Safety
 * `head` must be a live handle from `rl_pair_head_load`.
 */
uintptr_t rl_pair_head_latent_dim(const struct RlPairHead *head);

/**
 * Score a (predicted terminal, goal) latent pair: predicted scaled temporal
 * separation, strictly positive.
 *
 * # Safety
 * `head` must be live; `z_i`, `z_j` must point to `dim` readable doubles
 * matching the head's latent dim; `out` must be valid.
 */
enum RlStatus rl_pair_head_score(const struct RlPairHead *head,
                                 const double *z_i,
                                 const double *z_j,
                                 uintptr_t dim,
                                 double *out);

/**
 * # Safety
 * `head` must be a pointer from `rl_pair_head_load`, not yet freed.
 */
void rl_pair_head_free(struct RlPairHead *head);

#endif  /* REACHLAB_H */
