#include <filesystem>
#include <iostream>

#include "common.hpp"
#include "gengnn/errors.hpp"

namespace {

int fail(const std::string& code, const std::string& msg, int status = 1) {
    std::cerr << "error[" << code << "]: " << msg << "\n";
    return status;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discrete graph diffusion with GenGNN denoisers", "gengnn"};
    app.require_subcommand(1);
    gengnn::cli::add_gen(app);
    gengnn::cli::add_train(app);
    gengnn::cli::add_sample(app);
    gengnn::cli::add_eval(app);
    gengnn::cli::add_diagnose(app);
    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        fail("E_USAGE", e.what(), 0);
        const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        std::cerr << sub->help();
        return 2;
    } catch (const gengnn::Error& e) {
        return fail(e.code(), e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        return fail("E_IO", e.what());
    } catch (const nlohmann::json::exception& e) {
        return fail("E_SCHEMA", e.what());
    } catch (const std::exception& e) {
        return fail("E_INTERNAL", e.what());
    }
    return 0;
}
