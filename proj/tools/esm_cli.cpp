#include <cstdio>
#include <string>

#include "CLI11.hpp"

#include "esm/esm.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

int report(esm_status s)
{
    if (s == ESM_OK)
        return kExitOk;
    const long step = esm_last_error_step();
    if (s == ESM_ERR_CONFIG) {
        std::fprintf(stderr, "esm: config error: %s\n", esm_last_error());
        return kExitConfig;
    }
    if (step >= 0)
        std::fprintf(stderr, "esm: %s at step %ld: %s\n", esm_status_string(s), step, esm_last_error());
    else
        std::fprintf(stderr, "esm: %s: %s\n", esm_status_string(s), esm_last_error());
    return kExitRuntime;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Egocentric spatial memory simulator"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(esm_version()));

    std::string run_config;
    auto* run = app.add_subcommand("run", "run an episode and write its artifact bundle");
    run->add_option("config", run_config, "run config (JSON)")->required();

    std::string eval_dir;
    auto* eval = app.add_subcommand("eval", "recompute global-map metrics of a run directory");
    eval->add_option("run_dir", eval_dir, "bundle directory")->required();

    std::string train_config;
    auto* train = app.add_subcommand("train-pu", "train the place encoder");
    train->add_option("config", train_config, "training config (JSON)")->required();

    std::string pr_dir;
    auto* pr = app.add_subcommand("pr", "recompute loop-closure precision/recall of a run directory");
    pr->add_option("run_dir", pr_dir, "bundle directory")->required();

    std::string render_dir;
    auto* render = app.add_subcommand("render", "re-render the global map and trajectory overlay");
    render->add_option("run_dir", render_dir, "bundle directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    if (*run) {
        const int rc = report(esm_run(run_config.c_str()));
        if (rc == kExitOk)
            std::printf("run complete\n");
        return rc;
    }
    if (*eval) {
        esm_metrics m{};
        const int rc = report(esm_eval(eval_dir.c_str(), &m));
        if (rc == kExitOk)
            std::printf("t=%ld mse=%.6f correlation=%.6f mutual_information=%.6f%s\n", m.t, m.mse,
                        m.correlation, m.mutual_information, m.degenerate ? " (degenerate)" : "");
        return rc;
    }
    if (*train) {
        double first = 0.0;
        double last = 0.0;
        const int rc = report(esm_train_pu(train_config.c_str(), &first, &last));
        if (rc == kExitOk)
            std::printf("loss %.6f -> %.6f\n", first, last);
        return rc;
    }
    if (*pr) {
        double aucs[3] = {0.0, 0.0, 0.0};
        int empty = 0;
        const int rc = report(esm_pr(pr_dir.c_str(), aucs, &empty));
        if (rc == kExitOk) {
            if (empty)
                std::printf("no ground-truth revisits\n");
            else
                std::printf("auc embedding=%.4f pixelwise=%.4f random=%.4f\n", aucs[0], aucs[1], aucs[2]);
        }
        return rc;
    }
    if (*render)
        return report(esm_render(render_dir.c_str()));
    return kExitConfig;
}
