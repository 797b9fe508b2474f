#ifndef V0LVER_H
#define V0LVER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a fallible call.
 */
typedef enum V0lverStatus {
  V0LVER_STATUS_OK = 0,
  V0LVER_STATUS_NULL_ARGUMENT = 1,
  V0LVER_STATUS_INVALID_STRING = 2,
  V0LVER_STATUS_CONFIG = 3,
  V0LVER_STATUS_MATH = 4,
  /**
   * The engine rejected an action; state is unchanged.
   */
  V0LVER_STATUS_REJECTED = 5,
  /**
   * An internal invariant failed; the object should be discarded.
   */
  V0LVER_STATUS_INVARIANT = 6,
  V0LVER_STATUS_PANIC = 7,
} V0lverStatus;

/**
 * A live protocol state machine.
 */
typedef struct V0lverChain V0lverChain;

/**
 * A finished run and its twin.
 */
typedef struct V0lverRun V0lverRun;

/**
 * Scenario configuration.
 */
typedef struct V0lverScenario V0lverScenario;

/**
 * Outcome of moving a pool to a target price with a rebate.
 */
typedef struct V0lverMove {
  double new_x;
  double new_y;
  double vault_x;
  double vault_y;
  double producer_x;
  double producer_y;
  /**
   * Producer payoff valued at the supplied external price.
   */
  double payoff;
} V0lverMove;

/**
 * Settlement of a market-only batch against a snapshot.
 */
typedef struct V0lverSettlement {
  double price;
  /**
   * Escrow delta; positive components flow into the escrow.
   */
  double pool_dx;
  double pool_dy;
} V0lverSettlement;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *v0lver_last_error(void);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void v0lver_string_free(char *s);

/**
 * The built-in default scenario.
 */
struct V0lverScenario *v0lver_scenario_default(void);

/**
 * Parses and validates a TOML scenario.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum V0lverStatus v0lver_scenario_from_toml(const char *toml, struct V0lverScenario **out);

/**
 * Resolved scenario as TOML; free with `v0lver_string_free`.
 *
 * # Safety
 * `scenario` must be a live handle or null.
 */
char *v0lver_scenario_to_toml(const struct V0lverScenario *scenario);

/**
 * # Safety
 * `scenario` must be a live handle.
 */
enum V0lverStatus v0lver_scenario_set_seed(struct V0lverScenario *scenario, uint64_t seed);

/**
 * # Safety
 * `scenario` must be a live handle.
 */
enum V0lverStatus v0lver_scenario_set_runs(struct V0lverScenario *scenario, uint32_t runs);

/**
 * # Safety
 * `scenario` must be a live handle.
 */
enum V0lverStatus v0lver_scenario_set_horizon(struct V0lverScenario *scenario, uint64_t horizon);

/**
 * # Safety
 * `scenario` must come from this library or be null.
 */
void v0lver_scenario_free(struct V0lverScenario *scenario);

/**
 * Runs the scenario at its seed, together with its β ≡ 0 twin.
 *
 * # Safety
 * `scenario` must be a live handle; `out` must be writable.
 */
enum V0lverStatus v0lver_run(const struct V0lverScenario *scenario, struct V0lverRun **out);

/**
 * Run summary as JSON; free with `v0lver_string_free`.
 *
 * # Safety
 * `run` must be a live handle or null.
 */
char *v0lver_run_summary_json(const struct V0lverRun *run);

/**
 * # Safety
 * `run` must be a live handle; `x` and `y` writable.
 */
enum V0lverStatus v0lver_run_final_reserves(const struct V0lverRun *run, double *x, double *y);

/**
 * Realized LVR and that of the twin, both summed over updates.
 *
 * # Safety
 * `run` must be a live handle; `realized` and `baseline` writable.
 */
enum V0lverStatus v0lver_run_lvr(const struct V0lverRun *run, double *realized, double *baseline);

/**
 * # Safety
 * `run` must come from this library or be null.
 */
void v0lver_run_free(struct V0lverRun *run);

/**
 * LVR experiment over the scenario's run count; writes a JSON report to
 * `out` (free with `v0lver_string_free`). `jobs` = 0 uses every core.
 *
 * # Safety
 * `scenario` must be a live handle; `out` writable.
 */
enum V0lverStatus v0lver_lvr_experiment_json(const struct V0lverScenario *scenario,
                                             uint32_t jobs,
                                             char **out);

/**
 * Largest LVR available against `eps` on a constant-product pool.
 *
 * # Safety
 * `out` must be writable.
 */
enum V0lverStatus v0lver_max_lvr(double x, double y, double eps, double *out);

/**
 * Moves a constant-product pool to `target` with rebate `beta`.
 *
 * # Safety
 * `out` must be writable.
 */
enum V0lverStatus v0lver_rebated_move(double x,
                                      double y,
                                      double target,
                                      double beta,
                                      double eps,
                                      struct V0lverMove *out);

/**
 * Settles net market demand `dx` (x offered for y) and `dy` (y offered for
 * x) against a constant-product snapshot.
 *
 * # Safety
 * `out` must be writable.
 */
enum V0lverStatus v0lver_settle_market(double x,
                                       double y,
                                       double dx,
                                       double dy,
                                       struct V0lverSettlement *out);

/**
 * A chain at height 0 built from the scenario's pool, protocol settings,
 * roster endowments and initial external price.
 *
 * # Safety
 * `scenario` must be a live handle; `out` writable.
 */
enum V0lverStatus v0lver_chain_new(const struct V0lverScenario *scenario, struct V0lverChain **out);

/**
 * # Safety
 * `chain` must come from this library or be null.
 */
void v0lver_chain_free(struct V0lverChain *chain);

/**
 * Current block height, or `u64::MAX` for a null handle.
 *
 * # Safety
 * `chain` must be a live handle or null.
 */
uint64_t v0lver_chain_height(const struct V0lverChain *chain);

/**
 * Live reserves and vault holdings.
 *
 * # Safety
 * `chain` must be a live handle; all out-pointers writable.
 */
enum V0lverStatus v0lver_chain_reserves(const struct V0lverChain *chain,
                                        double *x,
                                        double *y,
                                        double *vault_x,
                                        double *vault_y);

/**
 * # Safety
 * `chain` must be a live handle.
 */
enum V0lverStatus v0lver_chain_set_external_price(struct V0lverChain *chain, double eps);

/**
 * Commits a user order (limit ≤ 0 means market) under `salt` and submits
 * the OCT; writes its id to `oct`. The same arguments reveal it later.
 *
 * # Safety
 * `chain` must be a live handle; `oct` writable.
 */
enum V0lverStatus v0lver_chain_submit(struct V0lverChain *chain,
                                      uint32_t user,
                                      bool sell_y,
                                      double size,
                                      double limit,
                                      uint64_t salt,
                                      uint64_t *oct);

/**
 * Inserts the whole mempool on behalf of `producer`.
 *
 * # Safety
 * `chain` must be a live handle.
 */
enum V0lverStatus v0lver_chain_insert_mempool(struct V0lverChain *chain, uint32_t producer);

/**
 * Update transaction naming allocation height `h_a` and target price;
 * writes the producer's arbitrage payoff to `payoff` when non-null.
 *
 * # Safety
 * `chain` must be a live handle; `payoff` writable or null.
 */
enum V0lverStatus v0lver_chain_update(struct V0lverChain *chain,
                                      uint32_t producer,
                                      uint64_t h_a,
                                      double target,
                                      double *payoff);

/**
 * Reveals OCT `oct` with the arguments it was submitted with.
 *
 * # Safety
 * `chain` must be a live handle.
 */
enum V0lverStatus v0lver_chain_reveal(struct V0lverChain *chain,
                                      uint64_t oct,
                                      uint32_t user,
                                      bool sell_y,
                                      double size,
                                      double limit,
                                      uint64_t salt);

/**
 * Ends the block: executes due batches, re-enters the vault, checks
 * conservation.
 *
 * # Safety
 * `chain` must be a live handle.
 */
enum V0lverStatus v0lver_chain_advance(struct V0lverChain *chain);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* V0LVER_H */
