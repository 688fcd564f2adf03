package com.example.mail.ui;

final class TextUtil {
    static String quote(String body) {
        return "> " + body.replace("\n", "\n> ");
    }
}
