from typing import List, Optional

TOPICS = {
    "simulate": """
            simulate --config cfg.json [--out DIR] [--seed N] [--annotated-fraction F]

            Draws a training and a test set from the generative model and
            writes them to DIR/train and DIR/test in the dataset schema
            (see `help files`), plus DIR/truth.json with the true parameters.
            The `sim` object of the config sets sizes and true values.
            ZETA defaults to 1e-12 for simulated data.

            Example:
            simulate --config sim.json --out data/sim --seed 7
            """,
    "fit": """
            fit --config cfg.json --data DIR --out DIR [--setting S] [--threshold T]

            Settings:
            full                - annotations and confidences (default)
            ordinal-only        - annotations only
            compositional-only  - confidences only
            maximum             - most frequent confident class per sequence (needs T)
            linear              - Bayesian linear model on expected scores (needs T)

            Writes samples.csv, trace.csv, intervals.csv, y_marginals.csv and
            fit.json (shapes, acceptance rates, standardization, survivors).
            Use --iterations/--burnin/--thin to shorten a run.

            Example:
            fit --data data/sim/train --out fits/full --iterations 3000 --burnin 2000
            """,
    "evaluate": """
            evaluate --config cfg.json --fit DIR [--data DIR] [--test DIR] --out DIR

            In-sample RPS uses the fit's latent score marginals against
            `true_y` in the training data; out-of-sample RPS uses posterior
            predictive pmfs on the test data. Set `beta_true` in the config to
            get coefficient MSE, coverage and detection.
            Writes report.json and rps_per_sequence.csv.
            """,
    "predict": """
            predict --config cfg.json --fit DIR --grid grid.csv --out DIR [--high-from K]

            grid.csv holds row_id,x1..xp on the raw covariate scale; the
            fit's stored standardization is applied before prediction.
            Writes predictions.csv with p1..pL and p_high = P(score >= K).
            """,
    "study": """
            study --config cfg.json --out DIR [--replicates K] [--workers W]

            Generates K replicates and fits every entry of `study_settings`
            to each. Completed replicates are checkpointed in DIR; rerunning
            the same study resumes where it stopped.
            Writes report.json, table_mse.csv, table_coverage.csv,
            table_detection.csv, rps_per_replicate.csv, rps_per_sequence.csv,
            relative_rps.csv and survivors.csv.
            """,
    "config": """
            Config file: one JSON object whose keys are RunConfig fields.

            mode, setting, threshold, annotated_fraction, zeta, L, seed,
            workers, replicates, max_images, standardize, high_from, verbose,
            beta_true
            paths:  data, test, fit, grid, out
            mcmc:   iterations, burnin, thin, adapt_target_block,
                    adapt_target_univariate, adapt_rate, initial_step,
                    progress_every
            sim:    n_train, n_test, L, p, beta_true, beta0_true, ...
            prior:  beta_sd, intercept_sd, omega_sd, annotator_accuracy, ...
            study_settings: list of {setting, threshold, annotated_fraction}

            Unknown keys are rejected. Command-line flags override the file.
            `run cfg.json` executes the file's `mode`.
            """,
    "files": """
            Dataset directory:
            sequences.csv    sequence_id, x1..xp[, true_y]
            images.csv       sequence_id, image_id, u1..uq
            annotations.csv  sequence_id, image_id, annotator_id, score
            confidences.csv  sequence_id, image_id, c1..cL

            Either annotations.csv or confidences.csv may be absent.
            Confidence rows must sum to 1 within 1e-6.
            """,
}


def handle_help_command(args: Optional[List[str]]) -> None:
    if not args:
        print("""
            Available help topics:
            simulate  - Generate synthetic datasets
            fit       - Fit one model setting
            evaluate  - Score a fit
            predict   - Predict over a covariate grid
            study     - Replicated simulation study
            config    - Run configuration keys
            files     - Dataset file layout

            Usage:
            help <topic>
            Example:
            help fit
              """)
        return
    topic = args[0].lower()
    text = TOPICS.get(topic)
    if text is None:
        print(f"No help available for '{topic}'.")
    else:
        print(text)
