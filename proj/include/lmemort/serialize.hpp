#pragma once

#include <iosfwd>
#include <string>

#include <json.hpp>

#include "lmemort/actuarial.hpp"
#include "lmemort/benchmarks.hpp"
#include "lmemort/covariates.hpp"
#include "lmemort/mixedlm.hpp"
#include "lmemort/selection.hpp"

namespace lmemort {

using Json = nlohmann::json;

Json grid_to_json(const AgeGrid& grid);  // list of labels such as "1-4"
AgeGrid grid_from_json(const Json& j);

// Everything prediction needs plus the summary tables: fixed effects with
// standard errors, psi blocks with correlations, sigma2 and criteria. Reading
// back gives a fit that predicts bit-identically.
Json fit_to_json(const FittedMixedModel& fit);
FittedMixedModel fit_from_json(const Json& j);

// CSV columns: group_key,regressor,value. With more than one random term the
// regressor carries its grouping, e.g. "cohort | c:g:x".
void write_blups_csv(std::ostream& out, const FittedMixedModel& fit);

Json walks_to_json(const CovariateWalks& walks);
CovariateWalks walks_from_json(const Json& j);

Json trace_to_json(const SelectionTrace& trace);
Json cleaning_to_json(const CleaningReport& report);
Json diagnostics_to_json(const ResidualDiagnostics& d);

Json lc_to_json(const LcFit& fit);
LcFit lc_from_json(const Json& j);
Json ll_to_json(const LlFit& fit);

Json solvency_to_json(const SolvencyResult& r);

Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& j);

}  // namespace lmemort
