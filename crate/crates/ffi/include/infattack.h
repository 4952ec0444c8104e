#ifndef INFATTACK_H
#define INFATTACK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IaDirection {
  IA_DIRECTION_ADD = 0,
  IA_DIRECTION_DELETE = 1,
} IaDirection;

typedef enum IaLabelSource {
  IA_LABEL_SOURCE_TRUE = 0,
  IA_LABEL_SOURCE_ESTIMATED = 1,
} IaLabelSource;

typedef enum IaMode {
  IA_MODE_APPROX = 0,
  IA_MODE_EXACT = 1,
} IaMode;

typedef enum IaStatus {
  IA_STATUS_OK = 0,
  IA_STATUS_NULL_POINTER = 1,
  IA_STATUS_INVALID_ARGUMENT = 2,
  IA_STATUS_DATA_ERROR = 3,
  IA_STATUS_RUNTIME_ERROR = 4,
  IA_STATUS_PANIC = 5,
} IaStatus;

/**
 * Opaque graph handle.
 */
typedef struct IaGraph IaGraph;

/**
 * Opaque attack-plan handle.
 */
typedef struct IaPlan IaPlan;

/**
 * Opaque trained-victim handle. Bound to the graph it was built on.
 */
typedef struct IaVictim IaVictim;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until the
 * next call into this library from the same thread.
 */
const char *ia_last_error_message(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void ia_string_free(char *s);

/**
 * Loads a graph bundle directory.
 *
 * # Safety
 * `dir` must be a NUL-terminated string; `out` must be writable.
 */
enum IaStatus ia_graph_load(const char *dir, struct IaGraph **out_graph);

/**
 * # Safety
 * `g` must come from [`ia_graph_load`] and not have been freed. NULL is ignored.
 */
void ia_graph_free(struct IaGraph *g);

/**
 * # Safety
 * Pointers must be valid.
 */
enum IaStatus ia_graph_num_nodes(const struct IaGraph *g, size_t *out_n);

/**
 * # Safety
 * Pointers must be valid.
 */
enum IaStatus ia_graph_num_classes(const struct IaGraph *g, size_t *out_n);

/**
 * Label influence of `u` on `v` after `k` propagation steps.
 *
 * # Safety
 * Pointers must be valid.
 */
enum IaStatus ia_label_influence(const struct IaGraph *g,
                                 size_t v,
                                 size_t u,
                                 size_t k,
                                 double *out_value);

/**
 * Exact attack objective for target `v`, using the graph's stored labels.
 *
 * # Safety
 * Pointers must be valid.
 */
enum IaStatus ia_objective(const struct IaGraph *g,
                           size_t v,
                           size_t target_label,
                           size_t own_label,
                           size_t k,
                           double *out_value);

/**
 * Candidate-independent part of the approximate gain.
 *
 * # Safety
 * Pointers must be valid.
 */
enum IaStatus ia_approx_constant(const struct IaGraph *g,
                                 size_t v,
                                 size_t target_label,
                                 size_t own_label,
                                 size_t k,
                                 enum IaDirection dir,
                                 double *out_value);

/**
 * Influence carried by walks through the edge (`v`, `candidate`).
 *
 * # Safety
 * Pointers must be valid.
 */
enum IaStatus ia_approx_delta(const struct IaGraph *g,
                              size_t v,
                              size_t target_label,
                              size_t own_label,
                              size_t k,
                              size_t candidate,
                              enum IaDirection dir,
                              double *out_value);

/**
 * Trains an SGC victim of depth `k` on every labeled node with default settings.
 *
 * # Safety
 * Pointers must be valid.
 */
enum IaStatus ia_victim_train(const struct IaGraph *g,
                              size_t k,
                              uint64_t seed,
                              struct IaVictim **out_victim);

/**
 * Loads a saved model and binds it to `g`.
 *
 * # Safety
 * Pointers must be valid; `path` must be NUL-terminated.
 */
enum IaStatus ia_victim_load(const struct IaGraph *g,
                             const char *path,
                             struct IaVictim **out_victim);

/**
 * # Safety
 * `v` must come from this library and not have been freed. NULL is ignored.
 */
void ia_victim_free(struct IaVictim *v);

/**
 * Plans an attack on `target` with up to `budget` edge toggles. The victim
 * must have been built on the same graph.
 *
 * # Safety
 * Pointers must be valid.
 */
enum IaStatus ia_plan_attack(const struct IaGraph *g,
                             const struct IaVictim *victim,
                             size_t target,
                             size_t k,
                             size_t budget,
                             enum IaMode mode,
                             enum IaLabelSource labels,
                             struct IaPlan **out_plan);

/**
 * # Safety
 * `p` must come from this library and not have been freed. NULL is ignored.
 */
void ia_plan_free(struct IaPlan *p);

/**
 * # Safety
 * Pointers must be valid.
 */
enum IaStatus ia_plan_success(const struct IaPlan *p, bool *out_success);

/**
 * # Safety
 * Pointers must be valid.
 */
enum IaStatus ia_plan_num_toggles(const struct IaPlan *p, size_t *out_n);

/**
 * The `index`-th toggle in planning order.
 *
 * # Safety
 * Pointers must be valid.
 */
enum IaStatus ia_plan_toggle(const struct IaPlan *p,
                             size_t index,
                             size_t *out_node,
                             enum IaDirection *out_dir);

/**
 * Full plan as JSON. Release with [`ia_string_free`].
 *
 * # Safety
 * Pointers must be valid.
 */
enum IaStatus ia_plan_to_json(const struct IaPlan *p, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INFATTACK_H */
