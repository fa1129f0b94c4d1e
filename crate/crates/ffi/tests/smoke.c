#include <math.h>
#include <stdio.h>
#include "mir3.h"

int main(void) {
    Mir3Config *cfg = mir3_config_default();
    if (mir3_config_set(cfg, "train.hidden_dim=8") != MIR3_STATUS_OK) return 1;
    if (mir3_config_set(cfg, "train.gamma=2") != MIR3_STATUS_CONFIG) return 2;
    if (mir3_last_error() == NULL) return 3;

    Mir3Env *env = NULL;
    if (mir3_env_new(3, 0.05, 5, &env) != MIR3_STATUS_OK) return 4;
    size_t d = mir3_env_obs_dim(env);
    double obs[64], act[6] = {0}, r = 0;
    int done = 0, steps = 0;
    if (mir3_env_reset(env, 7, obs, 3 * d) != MIR3_STATUS_OK) return 5;
    while (!done) {
        if (mir3_env_step(env, act, 6, obs, 3 * d, &r, &done) != MIR3_STATUS_OK) return 6;
        steps++;
    }
    if (steps != 5 || !(r <= 0)) return 7;

    double s[2] = {0, 2}, m, h;
    if (mir3_confidence_interval(s, 2, 0.95, &m, &h) != MIR3_STATUS_OK) return 8;
    if (fabs(m - 1) > 1e-12 || fabs(h - 1.959964) > 1e-5) return 9;
    if (mir3_confidence_interval(s, 1, 0.95, &m, &h) == MIR3_STATUS_OK) return 10;

    mir3_env_free(env);
    mir3_config_free(cfg);
    puts("ok");
    return 0;
}
