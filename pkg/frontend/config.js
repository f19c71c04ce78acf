// Static page configuration. Edit for your deployment; no rebuild needed.
window.ITAS_CONFIG = {
  apiBase: "http://127.0.0.1:8410",
  // token: "change-me",
  userName: "student",
  lessonFixture: "quantum_fundamentals",
};
