#ifndef CRM_H
#define CRM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result codes of the C interface.
 */
typedef enum CrmStatus {
  CRM_STATUS_OK = 0,
  CRM_STATUS_INVALID_ARGUMENT = 1,
  CRM_STATUS_NUMERICAL = 2,
  CRM_STATUS_NULL_POINTER = 3,
  CRM_STATUS_PANIC = 4,
} CrmStatus;

/*
 Model parameters with their quadrature rule.
 */
typedef struct CrmModel CrmModel;

/*
 A loaded portfolio.
 */
typedef struct CrmPortfolio CrmPortfolio;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread; empty after a success.
 The pointer stays valid until the next call on the same thread.
 */
const char *crm_last_error_message(void);

/*
 Writes the five latent correlations of `theta[4]` to `rho_out[5]`.

 # Safety
 `theta` must point to 4 doubles and `rho_out` to 5 writable doubles.
 */
enum CrmStatus crm_rho_from_theta(const double *theta, double *rho_out);

/*
 # Safety
 `theta` must point to 4 doubles; `out` must be writable.
 */
enum CrmStatus crm_check_admissible(const double *theta, bool *out);

/*
 Positive definiteness of the correlation matrix for `theta[4]` and the
 yearly claim counts `counts[years]`.

 # Safety
 `theta` must point to 4 doubles, `counts` to `years` values; `out` must
 be writable.
 */
enum CrmStatus crm_is_positive_definite(const double *theta,
                                        const size_t *counts,
                                        size_t years,
                                        bool *out);

/*
 Model from a JSON parameter object (the `params` layout of the CLI).

 # Safety
 `json` must be a NUL-terminated string; `out` must be writable.
 */
enum CrmStatus crm_model_from_json(const char *json, struct CrmModel **out);

/*
 Single-risk-class model. `nu_df <= 0` selects the Gaussian copula,
 otherwise a t copula with `nu_df` degrees of freedom.

 # Safety
 `theta` must point to 4 doubles; `out` must be writable.
 */
enum CrmStatus crm_model_intercept_only(double lambda,
                                        double xi,
                                        double nu_sev,
                                        const double *theta,
                                        double nu_df,
                                        struct CrmModel **out);

/*
 Sets the node counts of the factor and mixing quadratures.

 # Safety
 `model` must be a live handle.
 */
enum CrmStatus crm_model_set_quadrature(struct CrmModel *model,
                                        size_t factor_nodes,
                                        size_t mixing_nodes);

/*
 # Safety
 `model` must be null or a handle not yet freed.
 */
void crm_model_free(struct CrmModel *model);

/*
 Log density of one history. Year `t` has `counts[t]` claims whose
 amounts are consecutive in `severities`. `x` (`years * p`, row-major)
 and `w` (`years * q`) hold design rows; pass null for an intercept-only
 model.

 # Safety
 Arrays must have the stated lengths; `out` must be writable.
 */
enum CrmStatus crm_log_density(const struct CrmModel *model,
                               const size_t *counts,
                               size_t years,
                               const double *severities,
                               size_t n_severities,
                               const double *x,
                               const double *w,
                               double *out);

/*
 Loads a portfolio from the policy-year and claims CSV files. `config_json`
 may be null for an intercept-only design.

 # Safety
 Strings must be NUL-terminated; `out` must be writable.
 */
enum CrmStatus crm_portfolio_load(const char *policy_years_path,
                                  const char *claims_path,
                                  const char *config_json,
                                  struct CrmPortfolio **out);

/*
 Number of policies, or 0 for a null handle.

 # Safety
 `portfolio` must be null or a live handle.
 */
size_t crm_portfolio_len(const struct CrmPortfolio *portfolio);

/*
 # Safety
 `portfolio` must be null or a handle not yet freed.
 */
void crm_portfolio_free(struct CrmPortfolio *portfolio);

/*
 Negative log-likelihood of a portfolio.

 # Safety
 Handles must be live; `out` must be writable.
 */
enum CrmStatus crm_neg_log_likelihood(const struct CrmModel *model,
                                      const struct CrmPortfolio *portfolio,
                                      double *out);

/*
 Writes `(MSE, RMSE, MAE, Gini)` to `out[4]`.

 # Safety
 `actual` and `predicted` must point to `n` doubles, `out` to 4.
 */
enum CrmStatus crm_validation_metrics(const double *actual,
                                      const double *predicted,
                                      size_t n,
                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CRM_H */
