#include <math.h>
#include <stdio.h>

#include "fpe_mpc.h"

#define CHECK(cond)                                                   \
  do {                                                                \
    if (!(cond)) {                                                    \
      const char *err = fmpc_last_error();                            \
      fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, #cond,  \
              err ? err : "no error");                                \
      return 1;                                                       \
    }                                                                 \
  } while (0)

int main(void) {
  CHECK(fabs(fmpc_chang_cooper_delta(0.0) - 0.5) < 1e-15);

  double lower[2] = {-0.15, -0.15}, upper[2] = {0.15, 0.15};
  double mu[2] = {0.02, -0.01}, sigma[2] = {0.03, 0.03};
  FmpcPdf *p = NULL;
  CHECK(fmpc_pdf_gaussian(lower, upper, 21, mu, sigma, &p) == FMPC_STATUS_OK);
  CHECK(fmpc_pdf_len(p) == 441);

  double drift[2 * 441] = {0}, diffusion[4 * 441] = {0};
  for (size_t k = 0; k < 441; ++k) {
    diffusion[4 * k] = 1e-4;
    diffusion[4 * k + 3] = 1e-4;
  }
  FmpcPdf *next = NULL;
  CHECK(fmpc_pdf_step(p, NULL, drift, diffusion, 441, 0.1, &next) == FMPC_STATUS_OK);

  double mean[2], cov[4];
  CHECK(fmpc_pdf_moments(next, mean, cov) == FMPC_STATUS_OK);
  CHECK(fabs(mean[0] - 0.02) < 1e-3 && fabs(mean[1] + 0.01) < 1e-3);

  double d = -1.0;
  CHECK(fmpc_pdf_l2(p, p, &d) == FMPC_STATUS_OK && d == 0.0);

  double small[3];
  CHECK(fmpc_pdf_values(p, small, 3) == FMPC_STATUS_BUFFER_TOO_SMALL);
  CHECK(fmpc_last_error() != NULL);
  CHECK(fmpc_pdf_l2(p, NULL, &d) == FMPC_STATUS_NULL_POINTER);

  FmpcScenario *s = NULL;
  CHECK(fmpc_scenario_parse("[reference]\nmu = [0.3, -0.5]\nsigma = [-1.0, 0.05]\n", &s) ==
        FMPC_STATUS_INVALID_ARGUMENT);
  CHECK(fmpc_scenario_parse("[reference]\nmu = [0.3, -0.5]\nsigma = [0.05, 0.05]\n", &s) ==
        FMPC_STATUS_OK);

  fmpc_scenario_free(s);
  fmpc_pdf_free(next);
  fmpc_pdf_free(p);
  printf("ok %s\n", fmpc_version());
  return 0;
}
