// Reference decoder server backed by a simulation trace.

#include <iostream>
#include <string>

#include <unistd.h>

#include <CLI11.hpp>

#include "difftester/server.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Simulated decoder server speaking the line protocol"};
    std::string trace_path;
    int port = -1;
    int max_connections = 0;
    app.add_option("--trace", trace_path, "Trace file")->required();
    app.add_option("--port", port, "Serve TCP on this port (0 picks one) instead of stdio");
    app.add_option("--max-connections", max_connections, "Exit after this many TCP connections");
    CLI11_PARSE(app, argc, argv);

    try {
        difftester::ReferenceServer server(difftester::load_trace(trace_path));
        if (port < 0) {
            difftester::serve_stream(server, STDIN_FILENO, STDOUT_FILENO);
        } else {
            difftester::serve_tcp(server, port, max_connections, [](int bound) {
                std::cout << "listening on " << bound << std::endl;
            });
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
