int phasebeat_stub_pipeline_demo() { return 0; }
int main() { return 0; }
